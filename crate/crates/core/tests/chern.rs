use kodlab_core::chern::{
    characteristic_expansion, chern_number_with_omega, chern_reality_defect,
    tensor_chern_identity_residual, MatrixOfForms,
};
use kodlab_core::forms::{wedge, FormAtPoint};
use kodlab_core::model::{sample_fs_point, ChartPoint, ModelSpace};
use kodlab_core::quadrature::QuadratureRule;
use kodlab_core::rng::{complex_gaussian, complex_gaussians, stream};
use kodlab_core::sections::{BundleSpec, TorusFn, Twist};
use kodlab_core::C64;
use nalgebra::DMatrix;

fn matrix_twist_spec(p: u32, degrees: Vec<u32>) -> BundleSpec {
    let base = DMatrix::from_row_slice(2, 2, &[C64::new(2.0, 0.0), C64::new(0.3, 0.4), C64::new(0.3, -0.4), C64::new(1.0, 0.0)]);
    let direction = DMatrix::from_row_slice(2, 2, &[C64::new(0.5, 0.0), C64::new(0.1, -0.2), C64::new(0.1, 0.2), C64::new(-0.3, 0.0)]);
    BundleSpec::new(ModelSpace::cp2(), p, degrees).with_twist(Twist::Matrix {
        base,
        direction,
        profile: TorusFn::Bump {
            center: vec![0.2, 0.5, 0.3],
            width: 0.4,
            amplitude: 0.8,
        },
    })
}

fn points(space: ModelSpace, count: u64, label: &str) -> Vec<ChartPoint> {
    (0..count)
        .map(|i| sample_fs_point(space, &mut stream(3, label, i)))
        .collect()
}

#[test]
fn chern_forms_are_real() {
    let spec = matrix_twist_spec(1, vec![1, 1]);
    for x in points(ModelSpace::cp2(), 1000, "reality") {
        let h = spec.e_metric(&x);
        for k in 1..=2 {
            assert!(chern_reality_defect(k, &h).unwrap() < 1e-10);
        }
    }
}

fn signed_permutations(r: usize) -> Vec<(Vec<usize>, f64)> {
    if r == 0 {
        return vec![(Vec::new(), 1.0)];
    }
    let mut out = Vec::new();
    for (perm, sign) in signed_permutations(r - 1) {
        // Insert r−1 at position i; it passes r−1−i later entries.
        for i in 0..=perm.len() {
            let mut q = perm.clone();
            q.insert(i, r - 1);
            let s = if (r - 1 - i) % 2 == 0 { sign } else { -sign };
            out.push((q, s));
        }
    }
    out
}

/// Inhomogeneous forms as one component per degree, truncated at `dim`.
fn inhom_mul(a: &[FormAtPoint], b: &[FormAtPoint], dim: usize) -> Vec<FormAtPoint> {
    let mut out: Vec<FormAtPoint> = (0..=dim).map(|d| FormAtPoint::zero(d, dim)).collect();
    for x in a {
        for y in b {
            if x.degree + y.degree <= dim {
                out[x.degree + y.degree] = out[x.degree + y.degree].add(&wedge(x, y).unwrap());
            }
        }
    }
    out
}

#[test]
fn characteristic_expansion_matches_brute_force_determinant() {
    let (r, dim) = (3, 2);
    let mut rng = stream(4, "char-expansion", 0);
    for _ in 0..20 {
        let a = MatrixOfForms {
            rank: r,
            dim,
            coeffs: (0..dim * dim)
                .map(|_| DMatrix::from_vec(r, r, complex_gaussians(&mut rng, r * r)))
                .collect(),
        };
        let t = complex_gaussian(&mut rng);
        let entry = |j: usize, k: usize| -> Vec<FormAtPoint> {
            let scalar = if j == k { t } else { C64::new(0.0, 0.0) };
            vec![FormAtPoint::scalar(scalar, dim), a.entry(j, k)]
        };
        let mut det: Vec<FormAtPoint> = (0..=dim).map(|d| FormAtPoint::zero(d, dim)).collect();
        for (perm, sign) in signed_permutations(r) {
            let mut term = vec![FormAtPoint::one(dim)];
            for (j, &k) in perm.iter().enumerate() {
                term = inhom_mul(&term, &entry(j, k), dim);
            }
            for (d, f) in term.iter().enumerate() {
                det[d] = det[d].add(&f.scale(C64::new(sign, 0.0)));
            }
        }
        let expansion = characteristic_expansion(&a, t).unwrap();
        for d in 0..=dim {
            let gap = det[d].sub(&expansion[r - d]).max_abs();
            assert!(gap < 1e-12 * (1.0 + det[d].max_abs()), "degree {d}: {gap:.3e}");
        }
    }
}

#[test]
fn chern_numbers_ignore_conformal_bumps() {
    let rule = QuadratureRule::default_for(ModelSpace::cp2());
    let plain = BundleSpec::new(ModelSpace::cp2(), 1, vec![1, 2]);
    for i in 0..3 {
        let mut rng = stream(6, "bumps", i);
        let bumped = plain.clone().with_twist(Twist::Conformal(vec![
            TorusFn::random_bump(2, &mut rng),
            TorusFn::random_bump(2, &mut rng),
        ]));
        for j in 1..=2 {
            let a = chern_number_with_omega(j, &|x| Ok(plain.e_metric(x)), &rule).unwrap();
            let b = chern_number_with_omega(j, &|x| Ok(bumped.e_metric(x)), &rule).unwrap();
            assert!((a - b).abs() < 1e-6, "c_{j}: {a} vs {b}");
        }
    }
}

#[test]
fn tensor_identity_for_small_powers() {
    let pts = points(ModelSpace::cp2(), 20, "tensor");
    let rank_one = BundleSpec::new(ModelSpace::cp2(), 1, vec![2])
        .with_twist(Twist::Conformal(vec![TorusFn::Linear(vec![0.3, -0.2, 0.1])]))
        .with_line_twist(TorusFn::Linear(vec![0.0, 0.2, -0.1]));
    let rank_two = matrix_twist_spec(1, vec![1, 1]).with_line_twist(TorusFn::Linear(vec![0.1, 0.0, 0.25]));
    for spec in [rank_one, rank_two] {
        for p in 1..=10 {
            for k in 0..=spec.rank() {
                let res = tensor_chern_identity_residual(
                    p,
                    k,
                    &|x| spec.line_weight(x),
                    &|x| Ok(spec.e_metric(x)),
                    &pts,
                )
                .unwrap();
                assert!(res < 1e-8, "rank {} p={p} k={k}: {res:.3e}", spec.rank());
            }
        }
    }
}
