mod common;

use common::pairwise_auroc;
use oca_core::eval::auroc;
use proptest::prelude::*;

/// Scores drawn from a small grid so ties are frequent.
fn tied(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-8i32..8).prop_map(|x| x as f64 * 0.25), 1..=max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rank_form_equals_pairwise(a in tied(200), b in tied(200)) {
        prop_assert_eq!(auroc(&a, &b).unwrap().to_bits(), pairwise_auroc(&a, &b).to_bits());
    }

    #[test]
    fn continuous_scores_equal_pairwise(a in prop::collection::vec(-1e3f64..1e3, 1..100),
                                        b in prop::collection::vec(-1e3f64..1e3, 1..100)) {
        prop_assert_eq!(auroc(&a, &b).unwrap().to_bits(), pairwise_auroc(&a, &b).to_bits());
    }

    #[test]
    fn swapping_classes_complements(a in tied(60), b in tied(60)) {
        prop_assert_eq!(auroc(&a, &b).unwrap() + auroc(&b, &a).unwrap(), 1.0);
    }

    #[test]
    fn increasing_transform_invariance(a in tied(60), b in tied(60)) {
        let f = |x: &f64| (x * 0.7).exp() * 3.0 + x * x * x;
        let fa: Vec<f64> = a.iter().map(f).collect();
        let fb: Vec<f64> = b.iter().map(f).collect();
        prop_assert_eq!(auroc(&a, &b).unwrap(), auroc(&fa, &fb).unwrap());
    }

    #[test]
    fn bounded(a in tied(30), b in tied(30)) {
        let v = auroc(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }
}
