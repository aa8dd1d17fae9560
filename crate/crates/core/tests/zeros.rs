use kodlab_core::bergman::build_default;
use kodlab_core::model::ModelSpace;
use kodlab_core::sections::{BundleSpec, TorusFn, Twist};
use kodlab_core::zeros::{
    expectation_experiment, pair_measure, sample_zero_measure, MeasureKind, TestFunction,
};
use proptest::prelude::*;

#[test]
fn zero_counts_match_degree_and_bezout() {
    for p in [1u32, 5, 17, 40] {
        let space = build_default(&BundleSpec::new(ModelSpace::cp1(), p, vec![0])).unwrap();
        for i in 0..20 {
            let mu = sample_zero_measure(&space, MeasureKind::Gaussian, 12, "cp1-counts", i).unwrap();
            assert_eq!(mu.points.len(), p as usize);
            assert!(mu.max_residual < 1e-6 && mu.warnings.is_empty());
        }
    }
    for p in [1u32, 3, 6] {
        let space = build_default(&BundleSpec::new(ModelSpace::cp2(), p, vec![0, 0]).allow_high_rank()).unwrap();
        for i in 0..20 {
            let mu = sample_zero_measure(&space, MeasureKind::FubiniStudy, 12, "cp2-counts", i).unwrap();
            assert_eq!(mu.points.len(), (p * p) as usize);
            assert!(mu.max_residual < 1e-6, "{}", mu.max_residual);
        }
    }
}

#[test]
fn degenerate_samples_are_rare() {
    let space = build_default(&BundleSpec::new(ModelSpace::cp2(), 6, vec![0, 0]).allow_high_rank()).unwrap();
    let total = 200;
    let redraws: usize = (0..total)
        .map(|i| sample_zero_measure(&space, MeasureKind::Gaussian, 12, "degenerate-rate", i).unwrap().redraws)
        .sum();
    assert!((redraws as f64) < 0.01 * total as f64, "{redraws} redraws in {total}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unit_pairing_is_exact_mass(p in 1u32..48, index in any::<u64>()) {
        let space = build_default(&BundleSpec::new(ModelSpace::cp1(), p, vec![0])).unwrap();
        let mu = sample_zero_measure(&space, MeasureKind::Gaussian, 13, "unit-pairing", index).unwrap();
        let pairing = pair_measure(&mu, |_| 1.0);
        prop_assert_eq!(pairing, mu.points.len() as f64 / mu.normalizer);
        prop_assert_eq!(pairing, 1.0);
        let weighted = mu.weight() * mu.points.len() as f64;
        prop_assert!((pairing - weighted).abs() <= 2.0 * f64::EPSILON * pairing);
    }
}

/// `(spec, k, class number ∫ c_{r+1−k}(L^p ⊗ E) ∧ ω^{…})` for each regime.
fn mass_cases() -> Vec<(BundleSpec, usize, f64)> {
    let bump = Twist::Conformal(vec![
        TorusFn::Linear(vec![0.5, 0.0]),
        TorusFn::Linear(vec![0.5, 0.0]),
    ]);
    vec![
        // CP¹, E = O(0)², the divisor of s₁ ∧ s₂ has degree 2p.
        (BundleSpec::new(ModelSpace::cp1(), 6, vec![0, 0]).allow_high_rank().with_twist(bump), 2, 12.0),
        // CP², r = 1: a curve of degree p + 1 meets a line p + 1 times.
        (BundleSpec::new(ModelSpace::cp2(), 4, vec![1]), 1, 5.0),
        // CP², r = 2, k = 1: c₂(O(4) ⊕ O(5)) = 20.
        (BundleSpec::new(ModelSpace::cp2(), 4, vec![0, 1]), 1, 20.0),
        // CP², r = 2, k = 2: c₁(O(4) ⊕ O(5)) = 9.
        (BundleSpec::new(ModelSpace::cp2(), 4, vec![0, 1]), 2, 9.0),
    ]
}

#[test]
fn degeneracy_mass_is_cohomological() {
    for (spec, k, class) in mass_cases() {
        let m = (spec.rank() + 1 - k) as i32;
        let scaled = class / f64::from(spec.p).powi(m);
        let est = &expectation_experiment(&spec, k, 40, &[TestFunction::One], MeasureKind::Gaussian, 14).unwrap()[0];
        // Every sample has exactly the class number of points.
        assert_eq!(est.count_mismatches, 0);
        assert_eq!(est.se, 0.0);
        assert!((est.mean - scaled).abs() <= 1e-15 * scaled, "{} vs {scaled}", est.mean);
        // The pullback form integrates to the same class by quadrature.
        assert!((est.prediction - scaled).abs() < 1e-8 * scaled, "{} vs {scaled}", est.prediction);
    }
}
