use oca_core::labelset::{ClassSpec, LabelSet};
use oca_core::mixture::{box_scores, mixture_score, BoxScoreSet, DetectedBox};
use oca_core::scoring::Method;
use proptest::prelude::*;

fn pairwise_max_gap(xs: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for a in xs {
        for b in xs {
            best = best.max((a - b).abs());
        }
    }
    best
}

fn labels() -> LabelSet {
    LabelSet {
        name: "coarse".into(),
        in_classes: vec![ClassSpec::new("dog")],
        out_classes: vec![ClassSpec::new("bird"), ClassSpec::new("boat")],
    }
}

fn set_of(rows: Vec<Vec<f64>>) -> BoxScoreSet {
    BoxScoreSet {
        image_id: "i".into(),
        label_order: vec!["boat".into(), "dog".into(), "bird".into()],
        boxes: rows
            .into_iter()
            .map(|scores| DetectedBox {
                bbox: [0.0, 0.0, 1.0, 1.0],
                scores,
            })
            .collect(),
        image_scores: None,
    }
}

proptest! {
    #[test]
    fn equals_pairwise_oracle(xs in prop::collection::vec(-50.0f64..50.0, 2..40)) {
        prop_assert_eq!(mixture_score(&xs).unwrap(), pairwise_max_gap(&xs));
    }

    #[test]
    fn permutation_invariant(xs in prop::collection::vec(-50.0f64..50.0, 2..40), seed in any::<u64>()) {
        let mut ys = xs.clone();
        let mut s = seed | 1;
        for i in (1..ys.len()).rev() {
            s ^= s << 13; s ^= s >> 7; s ^= s << 17;
            ys.swap(i, (s % (i as u64 + 1)) as usize);
        }
        prop_assert_eq!(mixture_score(&xs).unwrap(), mixture_score(&ys).unwrap());
    }

    #[test]
    fn duplicate_box_gives_zero(s in -1e6f64..1e6) {
        prop_assert_eq!(mixture_score(&[s, s]).unwrap(), 0.0);
    }

    #[test]
    fn inner_box_leaves_g_unchanged(xs in prop::collection::vec(-50.0f64..50.0, 2..20), t in 0.0f64..1.0) {
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut ys = xs.clone();
        ys.push((lo + t * (hi - lo)).clamp(lo, hi));
        prop_assert_eq!(mixture_score(&xs).unwrap(), mixture_score(&ys).unwrap());
    }

    #[test]
    fn logit_shift_leaves_max_logit_diff_g_unchanged(
        rows in prop::collection::vec(prop::collection::vec((-1i64 << 20)..(1i64 << 20), 3), 2..8),
        k in -100i64..100,
    ) {
        let to_f = |r: &Vec<i64>| r.iter().map(|x| *x as f64 / (1u64 << 20) as f64).collect::<Vec<_>>();
        let base: Vec<Vec<f64>> = rows.iter().map(to_f).collect();
        let shifted: Vec<Vec<f64>> = base.iter().map(|r| r.iter().map(|x| x + k as f64).collect()).collect();
        let cfg = Method::MaxLogitDiff.into();
        let a = box_scores(&set_of(base), &labels(), &cfg).unwrap();
        let b = box_scores(&set_of(shifted), &labels(), &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(mixture_score(&a).unwrap(), mixture_score(&b).unwrap());
    }
}
