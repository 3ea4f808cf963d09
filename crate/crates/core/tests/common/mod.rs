#![allow(dead_code)]

use oca_core::embedding::normalize;
use oca_core::synth::{AnchorMode, BoxSynthConfig, Dominant, SynthClass, SynthConfig, SynthRng};

/// Softmax by direct exponentiation, no max subtraction.
pub fn naive_softmax(xs: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

pub fn naive_max(xs: &[f64]) -> f64 {
    let mut m = xs[0];
    for &x in &xs[1..] {
        if x > m {
            m = x;
        }
    }
    m
}

/// All five scores computed the long way on temperature-scaled logits.
/// Order: neg_max_prob, sum_out_prob, max_out_prob, neg_max_in_prob, max_logit_diff.
pub fn naive_scores(ins: &[f64], outs: &[f64], t: f64) -> [f64; 5] {
    let wi: Vec<f64> = ins.iter().map(|x| x / t).collect();
    let wo: Vec<f64> = outs.iter().map(|x| x / t).collect();
    let p_in_only = naive_softmax(&wi);
    let joint: Vec<f64> = wi.iter().chain(&wo).copied().collect();
    let p = naive_softmax(&joint);
    let (p_in, p_out) = p.split_at(wi.len());
    [
        -naive_max(&p_in_only),
        p_out.iter().sum(),
        naive_max(p_out),
        -naive_max(p_in),
        naive_max(&wo) - naive_max(&wi),
    ]
}

/// O(n·m) pairwise AUROC.
pub fn pairwise_auroc(ood: &[f64], ind: &[f64]) -> f64 {
    let mut c = 0.0;
    for &a in ood {
        for &b in ind {
            if a > b {
                c += 1.0;
            } else if a == b {
                c += 0.5;
            }
        }
    }
    c / (ood.len() * ind.len()) as f64
}

fn around(center: &[f64], spread: f64, rng: &mut SynthRng) -> Vec<f64> {
    let g = rng.unit_vector(center.len());
    let raw: Vec<f64> = center
        .iter()
        .zip(g.as_slice())
        .map(|(c, x)| c + spread * x)
        .collect();
    normalize(&raw).unwrap().into_inner()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// 3 seen-in, 3 unseen-in, 5 seen-out, 5 unseen-out classes in `dim` dimensions.
///
/// In-domain anchors scatter around one direction and OOD anchors around an
/// orthogonal one; an OOD anchor is redrawn until its cosine with every
/// in-domain anchor is at most `max_cross_cos`.
pub fn seen_unseen_config(
    seed: u64,
    dim: usize,
    kappa: f64,
    count: usize,
    max_cross_cos: f64,
) -> SynthConfig {
    let mut rng = SynthRng::seed_from_u64(seed ^ 0x5eed);
    let mut u = vec![0.0; dim];
    u[0] = 1.0;
    let mut v = vec![0.0; dim];
    v[1] = 1.0;
    let mut in_anchors = Vec::new();
    let mut classes = Vec::new();
    for split in ["seen_in", "unseen_in"] {
        for k in 0..3 {
            let a = around(&u, 0.8, &mut rng);
            in_anchors.push(a.clone());
            classes.push((format!("{split}_{k}"), split, a));
        }
    }
    for split in ["seen_out", "unseen_out"] {
        for k in 0..5 {
            let a = loop {
                let a = around(&v, 1.0, &mut rng);
                if in_anchors.iter().all(|b| cos(&a, b) <= max_cross_cos) {
                    break a;
                }
            };
            classes.push((format!("{split}_{k}"), split, a));
        }
    }
    SynthConfig {
        dim,
        seed,
        classes: classes
            .into_iter()
            .map(|(name, split, a)| SynthClass {
                name,
                anchor_mode: AnchorMode::Specified(a),
                noise_kappa: kappa,
                count,
                split: split.to_string(),
            })
            .collect(),
        boxes: None,
        name: "seen-unseen".into(),
    }
}

pub fn box_corpus_config(seed: u64, n: usize, margin: f64) -> SynthConfig {
    SynthConfig {
        dim: 2,
        seed,
        classes: Vec::new(),
        boxes: Some(BoxSynthConfig {
            seed: None,
            in_labels: vec!["dog".into()],
            out_labels: vec![
                "bird".into(),
                "boat".into(),
                "person".into(),
                "chair".into(),
                "car".into(),
            ],
            n_pure_in: n,
            n_pure_out: n,
            n_mixed: n,
            min_boxes: 2,
            max_boxes: 4,
            margin,
            jitter: 0.1,
            mixed_dominant: Dominant::In,
            image_size: [640.0, 480.0],
        }),
        name: "box-corpus".into(),
    }
}
