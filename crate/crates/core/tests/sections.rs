use kodlab_core::bergman::build_default;
use kodlab_core::model::{sample_fs_point, ModelSpace};
use kodlab_core::quadrature::{integrate_moment, QuadratureRule};
use kodlab_core::rng::{complex_gaussians, stream};
use kodlab_core::sections::{
    build_space, covariance_experiment, sample_fs_section,
    sample_gaussian_section, BundleSpec, SectionCoeffs, TorusFn, Twist,
};
use kodlab_core::stats::mean_se;
use kodlab_core::C64;
use nalgebra::{DMatrix, DVector};

fn c(x: f64, y: f64) -> C64 {
    C64::new(x, y)
}

/// `j!(p−j)!/(p+1)!`, the squared norm of `z^j` in `O(p)` over `CP¹`.
fn beta_norm(p: u32, j: u32) -> f64 {
    let mut v = 1.0 / (p as f64 + 1.0);
    for i in 0..j {
        v *= (i + 1) as f64 / (p - i) as f64;
    }
    v
}

fn choose(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

#[test]
fn cp1_gram_closed_form_through_twenty() {
    for p in 1..=20 {
        let space = build_default(&BundleSpec::new(ModelSpace::cp1(), p, vec![0])).unwrap();
        let g = space.gram();
        for (a, label) in space.basis.iter().enumerate() {
            let j = label.exponent[1];
            assert!((g[(a, a)].re - beta_norm(p, j)).abs() < 1e-10, "p={p} j={j}");
            for b in 0..space.dim() {
                if a != b {
                    assert!(g[(a, b)].norm() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn dimensions_are_binomial_counts() {
    let cases: [(ModelSpace, u32, Vec<u32>); 5] = [
        (ModelSpace::cp1(), 7, vec![0]),
        (ModelSpace::cp1(), 3, vec![2]),
        (ModelSpace::cp2(), 4, vec![0]),
        (ModelSpace::cp2(), 5, vec![1, 2]),
        (ModelSpace::cp2(), 2, vec![0, 3]),
    ];
    for (space, p, degrees) in cases {
        let n = space.n() as u64;
        let expect: u64 = degrees.iter().map(|&d| choose(n + (p + d) as u64, n)).sum();
        let spec = BundleSpec::new(space, p, degrees);
        assert_eq!(spec.dimension() as u64, expect);
        assert_eq!(build_default(&spec).unwrap().dim() as u64, expect);
    }
}

fn twisted_specs() -> Vec<BundleSpec> {
    let base = DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.3, 0.4), c(0.3, -0.4), c(1.0, 0.0)]);
    vec![
        BundleSpec::new(ModelSpace::cp2(), 2, vec![0, 1]).with_twist(Twist::Conformal(vec![
            TorusFn::Bump {
                center: vec![0.2, 0.5, 0.3],
                width: 0.4,
                amplitude: 0.6,
            },
            TorusFn::Linear(vec![0.0, 0.4, -0.2]),
        ])),
        BundleSpec::new(ModelSpace::cp2(), 2, vec![1, 1]).with_twist(Twist::Matrix {
            base,
            direction: DMatrix::identity(2, 2),
            profile: TorusFn::Linear(vec![0.0, 0.5, 0.25]),
        }),
    ]
}

#[test]
fn orthonormal_basis_reintegrates_to_identity() {
    for spec in twisted_specs() {
        let space = build_space(&spec, &QuadratureRule::default_for(spec.space)).unwrap();
        // The full product rule at a different radial order, independent of
        // the torus reduction used to build the blocks: Σ_nodes w M* H M.
        // Eight angles integrate every phase of degree ≤ 3 exactly.
        let fine = QuadratureRule::new(spec.space, 56, 8).unwrap();
        let mut g = DMatrix::<C64>::zeros(space.dim(), space.dim());
        for (x, w) in fine.nodes() {
            let (m, _) = space.monomial_matrix(&x);
            let h = spec.full_metric(&x).unwrap().value;
            g += m.adjoint() * h * m * c(w, 0.0);
        }
        let t = space.orthonormalizer();
        let w = &t * g * t.adjoint();
        let gap = (w - DMatrix::identity(space.dim(), space.dim())).norm();
        assert!(gap < 1e-10, "{gap:.3e}");
    }
}

#[test]
fn evaluation_is_linear() {
    let spec = &twisted_specs()[1];
    let space = build_default(spec).unwrap();
    let mut rng = stream(9, "linearity", 0);
    for i in 0..20 {
        let x = sample_fs_point(spec.space, &mut stream(9, "linearity-points", i));
        let a = DVector::from_vec(complex_gaussians(&mut rng, space.dim()));
        let b = DVector::from_vec(complex_gaussians(&mut rng, space.dim()));
        let lambda = c(0.7, -1.3);
        let sum = space.evaluate_section(&SectionCoeffs(&a * lambda + &b), &x);
        let parts = space.evaluate_section(&SectionCoeffs(a), &x) * lambda + space.evaluate_section(&SectionCoeffs(b), &x);
        assert!((sum - &parts).norm() < 1e-12 * (1.0 + parts.norm()));
    }
}

#[test]
fn gaussian_coordinates_have_unit_variance() {
    let space = build_default(&BundleSpec::new(ModelSpace::cp1(), 3, vec![0])).unwrap();
    let t = space.orthonormalizer();
    let g = space.gram();
    let n = 100_000;
    let mut squares = vec![Vec::with_capacity(n); space.dim()];
    let mut norms = Vec::with_capacity(n);
    for i in 0..n {
        let s = sample_gaussian_section(&space, &mut stream(9, "gaussian-variance", i as u64));
        // (s, e_a) for the orthonormal basis e_a = columns of T*.
        let coords = &t * &g * &s.0;
        for (a, v) in coords.iter().enumerate() {
            squares[a].push(v.norm_sqr());
        }
        norms.push(space.l2_norm_sq(&s));
    }
    for sq in &squares {
        let m = mean_se(sq);
        assert!((m.mean - 1.0).abs() < 5.0 * m.se, "{} ± {}", m.mean, m.se);
    }
    let m = mean_se(&norms[..10_000]);
    assert!((m.mean - space.dim() as f64).abs() < 4.0 * m.se);
}

#[test]
fn normalized_gaussian_pushes_forward_to_fs_volume() {
    // P V₁ over CP¹ is a projective line; t = |u₀|²/‖u‖² in orthonormal
    // coordinates is then uniform, and E[e^{−2t}] is its moment integral.
    let space = build_default(&BundleSpec::new(ModelSpace::cp1(), 1, vec![0])).unwrap();
    let t = space.orthonormalizer();
    let g = space.gram();
    let values: Vec<f64> = (0..10_000)
        .map(|i| {
            let s = sample_fs_section(&space, &mut stream(9, "fs-pushforward", i));
            let u = &t * &g * &s.0;
            (-2.0 * u[0].norm_sqr() / u.norm_squared()).exp()
        })
        .collect();
    let rule = QuadratureRule::default_for(ModelSpace::cp1());
    let expect = integrate_moment(|m| (-2.0 * m[0]).exp(), &rule) / rule.total_mass();
    let m = mean_se(&values);
    assert!((m.mean - expect).abs() < 4.0 * m.se, "{} ± {} vs {expect}", m.mean, m.se);
}

#[test]
fn identity_twist_covariance_is_scalar() {
    let spec = BundleSpec::new(ModelSpace::cp1(), 3, vec![0, 0])
        .allow_high_rank()
        .with_twist(Twist::Constant(DMatrix::identity(2, 2)));
    let space = build_default(&spec).unwrap();
    let report = covariance_experiment(&space, 10_000, 9, "identity-covariance").unwrap();
    for j in 0..2 {
        for l in 0..2 {
            let expect = if j == l { 4.0 } else { 0.0 };
            let e = report.estimate[(j, l)];
            assert!((e.re - expect).abs() < 4.0 * report.se_re[(j, l)]);
            assert!(e.im.abs() < 4.0 * report.se_im[(j, l)].max(1e-300));
        }
    }
    assert!((&report.estimate - report.estimate.adjoint()).norm() < 1e-12);
}
