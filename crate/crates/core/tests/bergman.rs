use kodlab_core::bergman::{
    bergman_diagonal, build_default, curvature_transfer_residual, kodaira_pullback_metric,
    pullback_class_integrals, rule_for_degree, trace_integral,
};
use kodlab_core::model::{sample_fs_point, ChartPoint, ModelSpace};
use kodlab_core::rng::stream;
use kodlab_core::sections::{BundleSpec, TorusFn, Twist};
use kodlab_core::C64;
use nalgebra::DMatrix;

fn points(space: ModelSpace, count: u64, label: &str) -> Vec<ChartPoint> {
    (0..count)
        .map(|i| sample_fs_point(space, &mut stream(10, label, i)))
        .collect()
}

fn twisted_cp2(p: u32) -> BundleSpec {
    BundleSpec::new(ModelSpace::cp2(), p, vec![1, 2]).with_twist(Twist::Conformal(vec![
        TorusFn::Bump {
            center: vec![0.2, 0.5, 0.3],
            width: 0.4,
            amplitude: 0.3,
        },
        TorusFn::Linear(vec![0.0, 0.4, -0.2]),
    ]))
}

fn matrix_cp2(p: u32) -> BundleSpec {
    let base = DMatrix::from_row_slice(2, 2, &[C64::new(2.0, 0.0), C64::new(0.3, 0.4), C64::new(0.3, -0.4), C64::new(1.0, 0.0)]);
    BundleSpec::new(ModelSpace::cp2(), p, vec![1, 1])
        .with_twist(Twist::Matrix {
            base,
            direction: DMatrix::identity(2, 2),
            profile: TorusFn::Linear(vec![0.0, 0.5, 0.25]),
        })
        .with_line_twist(TorusFn::Linear(vec![0.1, 0.0, -0.2]))
}

#[test]
fn trace_integrates_to_dimension() {
    let mut specs: Vec<BundleSpec> = [1, 4, 9, 16, 25]
        .into_iter()
        .map(|p| BundleSpec::new(ModelSpace::cp2(), p, vec![0]))
        .collect();
    specs.extend([twisted_cp2(5), matrix_cp2(4), BundleSpec::new(ModelSpace::cp1(), 30, vec![3])]);
    for spec in specs {
        let space = build_default(&spec).unwrap();
        let q = spec.p + spec.degrees.iter().max().unwrap();
        let v = trace_integral(&space, &rule_for_degree(spec.space, q)).unwrap();
        let d = space.dim() as f64;
        assert!((v - d).abs() < 1e-8 * d, "p={} {:?}: {v} vs {d}", spec.p, spec.degrees);
    }
}

#[test]
fn cp1_kernel_is_constant_at_random_points() {
    for p in [16u32, 64] {
        let space = build_default(&BundleSpec::new(ModelSpace::cp1(), p, vec![0])).unwrap();
        let values: Vec<f64> = points(ModelSpace::cp1(), 100, "constancy")
            .iter()
            .map(|x| bergman_diagonal(&space, x).unwrap().endomorphism.value[(0, 0)].re)
            .collect();
        let (lo, hi) = values.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        let target = p as f64 + 1.0;
        assert!((hi - lo) / target < 1e-8 && (hi - target).abs() / target < 1e-8);
    }
}

#[test]
fn pullback_classes_match_induced_classes() {
    for spec in [twisted_cp2(5), matrix_cp2(4)] {
        let space = build_default(&spec).unwrap();
        let rule = rule_for_degree(spec.space, spec.p + 2);
        for k in 1..=2 {
            let (pulled, induced) = pullback_class_integrals(k, &space, &rule).unwrap();
            assert!(
                (pulled - induced).abs() < 1e-6 * induced.abs(),
                "k={k}: {pulled} vs {induced}"
            );
        }
    }
}

#[test]
fn pullback_metric_is_positive() {
    let space = build_default(&matrix_cp2(4)).unwrap();
    for x in points(ModelSpace::cp2(), 50, "positive-pullback") {
        let h = kodaira_pullback_metric(&space, &x).unwrap().value;
        assert!((&h - h.adjoint()).norm() < 1e-12 * h.norm());
        assert!(h.symmetric_eigenvalues().min() > 0.0);
    }
}

#[test]
fn transfer_identity_at_random_points() {
    let flat = build_default(&BundleSpec::new(ModelSpace::cp1(), 9, vec![0])).unwrap();
    for x in points(ModelSpace::cp1(), 20, "transfer-cp1") {
        assert!(curvature_transfer_residual(&flat, &x).unwrap() < 1e-9);
    }
    let space = build_default(&twisted_cp2(5)).unwrap();
    for x in points(ModelSpace::cp2(), 20, "transfer-cp2") {
        let r = curvature_transfer_residual(&space, &x).unwrap();
        assert!(r < 1e-7, "{r:.3e}");
    }
}
