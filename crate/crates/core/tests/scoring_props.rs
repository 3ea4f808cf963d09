mod common;

use common::naive_scores;
use oca_core::scoring::{
    identity_residual, score, score_max_logit_diff, JointLogits, Method, ScoreConfig,
};
use proptest::prelude::*;

fn logits(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-30.0f64..30.0, 1..=max_len)
}

/// Multiples of 2^-20 so that adding an integer shift is exact.
fn dyadic_logits(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-30i64 << 20)..(30i64 << 20), 1..=max_len).prop_map(|v| {
        v.into_iter()
            .map(|x| x as f64 / (1u64 << 20) as f64)
            .collect()
    })
}

fn jl(i: Vec<f64>, o: Vec<f64>) -> JointLogits {
    JointLogits::new(i, o).unwrap()
}

proptest! {
    #[test]
    fn matches_naive_oracle(i in logits(12), o in logits(12), t in 0.5f64..4.0) {
        let want = naive_scores(&i, &o, t);
        let j = jl(i, o);
        for (k, m) in Method::ALL.into_iter().enumerate() {
            let got = score(&j, &ScoreConfig::new(m, t).unwrap()).unwrap();
            prop_assert!((got - want[k]).abs() <= 1e-12, "{m}: {got} vs {}", want[k]);
        }
    }

    #[test]
    fn shift_invariance(i in dyadic_logits(10), o in dyadic_logits(10), k in -1000i64..1000) {
        let k = k as f64;
        let a = jl(i.clone(), o.clone());
        let b = jl(i.iter().map(|x| x + k).collect(), o.iter().map(|x| x + k).collect());
        for m in Method::ALL {
            let c = ScoreConfig::from(m);
            let (x, y) = (score(&a, &c).unwrap(), score(&b, &c).unwrap());
            if m == Method::MaxLogitDiff {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            } else {
                prop_assert!((x - y).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn raising_an_out_logit_never_lowers_out_scores(
        i in logits(8), o in logits(8), idx in any::<prop::sample::Index>(), bump in 0.0f64..5.0
    ) {
        let a = jl(i.clone(), o.clone());
        let mut o2 = o.clone();
        let k = idx.index(o2.len());
        o2[k] += bump;
        let is_top = o.iter().all(|&x| x <= o[k]);
        let b = jl(i, o2);
        for m in [Method::MaxLogitDiff, Method::MaxOutProb, Method::SumOutProb, Method::NegMaxInProb] {
            // raising a non-maximal OOD logit grows the normaliser and can lower max_out_prob
            if m == Method::MaxOutProb && !is_top {
                continue;
            }
            let c = ScoreConfig::from(m);
            prop_assert!(score(&b, &c).unwrap() >= score(&a, &c).unwrap() - 1e-15, "{m}");
        }
    }

    #[test]
    fn complement_identity(i in logits(10), o in logits(10)) {
        let j = jl(i.clone(), o.clone());
        let sum_out = score(&j, &Method::SumOutProb.into()).unwrap();
        let p = common::naive_softmax(&[i.clone(), o].concat());
        let in_mass: f64 = p[..i.len()].iter().sum();
        prop_assert!((sum_out + in_mass - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn decomposition_holds(i in logits(50), o in logits(50)) {
        let r = identity_residual(&jl(i, o), &Method::NegMaxInProb.into()).unwrap();
        prop_assert!(r.residual() <= 1e-9, "{r:?}");
    }

    #[test]
    fn temperature_keeps_sign(i in logits(6), o in logits(6), t in 1e-3f64..1e3) {
        let j = jl(i, o);
        let base = score_max_logit_diff(&j, &Method::MaxLogitDiff.into()).unwrap();
        let scaled = score_max_logit_diff(&j, &ScoreConfig::new(Method::MaxLogitDiff, t).unwrap()).unwrap();
        prop_assert_eq!(base.signum(), scaled.signum());
        prop_assert_eq!(base == 0.0, scaled == 0.0);
    }

    #[test]
    fn repeat_evaluation_is_bit_identical(i in logits(6), o in logits(6)) {
        let j = jl(i, o);
        for m in Method::ALL {
            let c = ScoreConfig::from(m);
            prop_assert_eq!(score(&j, &c).unwrap().to_bits(), score(&j, &c).unwrap().to_bits());
        }
    }
}

#[test]
fn max_out_prob_can_drop_when_a_runner_up_rises() {
    let c = ScoreConfig::from(Method::MaxOutProb);
    let before = score(&jl(vec![0.0], vec![0.0, 0.0, -15.0]), &c).unwrap();
    let after = score(&jl(vec![0.0], vec![0.0, 0.0, 0.0]), &c).unwrap();
    assert!(after < before);
}

#[test]
fn vanishing_temperature_saturates_neg_max_in_prob() {
    let cold = ScoreConfig::new(Method::NegMaxInProb, 1e-4).unwrap();
    let in_wins = jl(vec![0.31, 0.2], vec![0.3, -0.1]);
    assert!((score(&in_wins, &cold).unwrap() + 1.0).abs() < 1e-12);
    let out_wins = jl(vec![0.29, 0.2], vec![0.3, -0.1]);
    assert!(score(&out_wins, &cold).unwrap().abs() < 1e-12);
}
