//! End-to-end scoring against a naive re-implementation of the whole pipeline.

mod common;

use oca_core::labelset::{ClassSpec, LabelSet};
use oca_core::oceb::{EmbeddingStore, RecordMeta};
use oca_core::scoring::{score_record, Method, ScoreConfig};
use oca_core::synth::SynthRng;

fn random_f32(rng: &mut SynthRng, dim: usize) -> Vec<f32> {
    let v = rng.unit_vector(dim);
    v.as_slice().iter().map(|&x| x as f32).collect()
}

#[test]
fn sixteen_dim_scores_match_naive_pipeline() {
    let dim = 16;
    let mut rng = SynthRng::seed_from_u64(77);
    let templates = ["a photo of a {}.", "a drawing of a {}.", "{}"];
    let ins = ["beagle", "pug"];
    let outs = ["cat", "car", "wolf"];

    let mut texts = EmbeddingStore::new(dim, true).unwrap();
    let mut text_vals: Vec<(String, Vec<f32>)> = Vec::new();
    for name in ins.iter().chain(&outs) {
        for t in templates {
            let key = t.replace("{}", name);
            let v = random_f32(&mut rng, dim);
            texts
                .push(RecordMeta::new(key.clone(), *name, None), &v)
                .unwrap();
            text_vals.push((key, v));
        }
    }
    let labels = LabelSet {
        name: "p".into(),
        in_classes: ins
            .iter()
            .map(|n| ClassSpec::new(*n).with_prompts(templates))
            .collect(),
        out_classes: outs
            .iter()
            .map(|n| ClassSpec::new(*n).with_prompts(templates))
            .collect(),
    };
    let emb = labels.embed(&texts).unwrap();

    // naive class vectors: mean of the prompt vectors, then unit norm
    let naive_class = |name: &str| -> Vec<f64> {
        let mut acc = vec![0.0f64; dim];
        for t in templates {
            let key = t.replace("{}", name);
            let v = &text_vals.iter().find(|(k, _)| *k == key).unwrap().1;
            for k in 0..dim {
                acc[k] += v[k] as f64 / templates.len() as f64;
            }
        }
        let n = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        acc.iter().map(|x| x / n).collect()
    };
    let in_vecs: Vec<Vec<f64>> = ins.iter().map(|n| naive_class(n)).collect();
    let out_vecs: Vec<Vec<f64>> = outs.iter().map(|n| naive_class(n)).collect();

    for temperature in [1.0, 0.07, 3.0] {
        let cfgs: Vec<ScoreConfig> = Method::ALL
            .iter()
            .map(|m| ScoreConfig::new(*m, temperature).unwrap())
            .collect();
        for trial in 0..20 {
            let img32 = random_f32(&mut rng, dim);
            let img: Vec<f64> = img32.iter().map(|&x| x as f64).collect();
            let mut store = EmbeddingStore::new(dim, true).unwrap();
            store
                .push(RecordMeta::new("img", "?", None), &img32)
                .unwrap();
            let rec =
                score_record(&format!("img{trial}"), "s", &store.vector(0), &emb, &cfgs).unwrap();

            let dot = |c: &Vec<f64>| (0..dim).map(|k| img[k] * c[k]).sum::<f64>();
            let wi: Vec<f64> = in_vecs.iter().map(dot).collect();
            let wo: Vec<f64> = out_vecs.iter().map(dot).collect();
            let want = common::naive_scores(&wi, &wo, temperature);
            for (k, m) in Method::ALL.iter().enumerate() {
                let got = rec.scores[m];
                assert!(
                    (got - want[k]).abs() <= 1e-10,
                    "T={temperature} {m}: {got} vs {}",
                    want[k]
                );
            }
        }
    }
}
