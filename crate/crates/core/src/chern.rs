//! Chern curvature of metric frames and Chern forms.
//!
//! A metric frame is the matrix `H_{jk} = h(t_k, t_j)` of a Hermitian metric
//! in a holomorphic frame. Its curvature `R = ∂̄(H⁻¹ ∂H)` has, on
//! `dz_a ∧ dz̄_b`, the coefficient
//! `ρ_ab = H⁻¹ ∂̄_b H H⁻¹ ∂_a H − H⁻¹ ∂_a ∂̄_b H`,
//! and `iR/2π` has coefficient `ρ_ab / 2π` on `i dz_a ∧ dz̄_b`.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{LabError, Result};
use crate::forms::{binomial, FormAtPoint};
use crate::jet::{checked_inverse, MatrixJet, MixedJet2, C64, DEFAULT_CONDITION_LIMIT};
use crate::model::{fs_form, fs_metric, ChartPoint};
use crate::quadrature::{try_integrate_invariant, QuadratureRule};

/// An `r × r` matrix of `(1,1)`-forms at one point, stored by coordinate
/// pair: `coeffs[a * dim + b]` is the `r × r` coefficient matrix of
/// `i dz_a ∧ dz̄_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixOfForms {
    pub rank: usize,
    pub dim: usize,
    pub coeffs: Vec<DMatrix<C64>>,
}

impl MatrixOfForms {
    pub fn zero(rank: usize, dim: usize) -> Self {
        Self {
            rank,
            dim,
            coeffs: vec![DMatrix::zeros(rank, rank); dim * dim],
        }
    }

    /// Diagonal matrix with the given `(1,1)`-forms.
    pub fn diagonal(forms: &[FormAtPoint]) -> Self {
        let r = forms.len();
        let dim = forms.first().map(|f| f.dim).unwrap_or(0);
        let mut out = Self::zero(r, dim);
        for (j, f) in forms.iter().enumerate() {
            for ab in 0..dim * dim {
                out.coeffs[ab][(j, j)] = f.coeffs[ab];
            }
        }
        out
    }

    pub fn entry(&self, j: usize, k: usize) -> FormAtPoint {
        FormAtPoint {
            degree: 1,
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|m| m[(j, k)]).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            rank: self.rank,
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|m| m.transpose()).collect(),
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            rank: self.rank,
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|m| m * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            rank: self.rank,
            dim: self.dim,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(x, y)| x + y)
                .collect(),
        }
    }

    /// `left · self · right` entrywise in the coefficient slots.
    pub fn conjugate_by(&self, left: &DMatrix<C64>, right: &DMatrix<C64>) -> Self {
        Self {
            rank: self.rank,
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|m| left * m * right).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs
            .iter()
            .flat_map(|m| m.iter())
            .map(|x| x.norm())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> FormAtPoint {
        FormAtPoint {
            degree: 1,
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|m| m.trace()).collect(),
        }
    }
}

/// The raw curvature coefficients `ρ_ab` of `R = Σ ρ_ab dz_a ∧ dz̄_b`.
pub fn curvature_coefficients(h: &MatrixJet) -> Result<Vec<DMatrix<C64>>> {
    let inv = checked_inverse(&h.value, DEFAULT_CONDITION_LIMIT)?;
    let m = h.dim();
    let theta: Vec<_> = h.d.iter().map(|x| &inv * x).collect();
    let theta_bar: Vec<_> = h.dbar.iter().map(|x| &inv * x).collect();
    let mut out = Vec::with_capacity(m * m);
    for a in 0..m {
        for b in 0..m {
            out.push(&theta_bar[b] * &theta[a] - &inv * &h.mixed[a * m + b]);
        }
    }
    Ok(out)
}

/// `iR/2π` for the metric frame `h`.
pub fn curvature_from_metric_frame(h: &MatrixJet) -> Result<MatrixOfForms> {
    let coeffs = curvature_coefficients(h)?
        .into_iter()
        .map(|m| m / C64::new(2.0 * PI, 0.0))
        .collect();
    Ok(MatrixOfForms {
        rank: h.rank(),
        dim: h.dim(),
        coeffs,
    })
}

/// Determinant of the principal block on `rows` by permutation expansion.
fn principal_minor(a: &MatrixOfForms, rows: &[usize]) -> Result<FormAtPoint> {
    let mut acc = FormAtPoint::zero(rows.len(), a.dim);
    for (perm, sign) in crate::forms::permutations(rows) {
        let mut term = FormAtPoint::one(a.dim);
        for (i, &j) in rows.iter().zip(&perm) {
            term = term.try_wedge(&a.entry(*i, j))?;
        }
        acc = acc.add(&term.scale(C64::new(sign, 0.0)));
    }
    Ok(acc)
}

/// Elementary invariant polynomial: the sum of `k × k` principal minors.
pub fn invariant_polynomial(k: usize, a: &MatrixOfForms) -> Result<FormAtPoint> {
    if k > a.rank {
        return Err(LabError::Rejected(format!(
            "invariant polynomial degree {k} exceeds rank {}",
            a.rank
        )));
    }
    if k > a.dim {
        return Ok(FormAtPoint::zero(k.min(a.dim), a.dim));
    }
    let mut acc = FormAtPoint::zero(k, a.dim);
    for rows in crate::forms::subsets(a.rank, k) {
        acc = acc.add(&principal_minor(a, &rows)?);
    }
    Ok(acc)
}

/// `c_k` of the metric frame `h`.
pub fn chern_form(k: usize, h: &MatrixJet) -> Result<FormAtPoint> {
    if k > h.rank() {
        return Err(LabError::Rejected(format!(
            "Chern degree {k} exceeds rank {}",
            h.rank()
        )));
    }
    invariant_polynomial(k, &curvature_from_metric_frame(h)?)
}

/// `c_1` of a line-bundle metric given by its single frame weight.
pub fn first_chern_of_weight(weight: &MixedJet2) -> Result<FormAtPoint> {
    chern_form(1, &MatrixJet::from_entries(&[vec![weight.clone()]])?)
}

/// Metric frame of `L^p ⊗ E` from the line weight and the frame of `E`.
pub fn twist_by_line(h_e: &MatrixJet, line_weight: &MixedJet2, p: u32) -> Result<MatrixJet> {
    h_e.scale_by(&line_weight.powi(p))
}

/// `Σ_j binom(r−j, k−j) c_j(E) ∧ c_1(L)^{k−j}`, the expansion of
/// `c_k(L^p ⊗ E)` through `c_1(L^p) = p c_1(L)`.
pub fn tensor_expansion(
    k: usize,
    p: u32,
    line_weight: &MixedJet2,
    h_e: &MatrixJet,
) -> Result<FormAtPoint> {
    let r = h_e.rank();
    let dim = h_e.dim();
    let c1l = first_chern_of_weight(line_weight)?.scale(C64::new(p as f64, 0.0));
    let curv = curvature_from_metric_frame(h_e)?;
    let mut acc = FormAtPoint::zero(k.min(dim), dim);
    for j in 0..=k {
        if j > dim || k - j > dim || k > dim {
            continue;
        }
        let cj = invariant_polynomial(j, &curv)?;
        let term = cj
            .try_wedge(&c1l.power(k - j)?)?
            .scale(C64::new(binomial(r - j, k - j) as f64, 0.0));
        acc = acc.add(&term);
    }
    Ok(acc)
}

/// Sup over `points` of the coefficient-wise gap between `c_k(L^p ⊗ E)`
/// computed from the tensor metric and its binomial expansion.
pub fn tensor_chern_identity_residual(
    p: u32,
    k: usize,
    line_weight: &dyn Fn(&ChartPoint) -> MixedJet2,
    e_metric: &dyn Fn(&ChartPoint) -> Result<MatrixJet>,
    points: &[ChartPoint],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in points {
        let hl = line_weight(x);
        let he = e_metric(x)?;
        if k > he.rank() {
            return Err(LabError::Rejected(format!(
                "Chern degree {k} exceeds rank {}",
                he.rank()
            )));
        }
        if k > x.n() {
            continue;
        }
        let lhs = chern_form(k, &twist_by_line(&he, &hl, p)?)?;
        let rhs = tensor_expansion(k, p, &hl, &he)?;
        worst = worst.max(lhs.sub(&rhs).max_abs());
    }
    Ok(worst)
}

/// `∫ F` for a top-degree form field, as `∫ (F_top / det g) ω^n/n!`.
/// The integrand must be torus invariant.
pub fn integrate_top_form_invariant(
    form: &(dyn Fn(&ChartPoint) -> Result<FormAtPoint> + Sync),
    rule: &QuadratureRule,
) -> Result<f64> {
    let v = try_integrate_invariant(
        |x| {
            let f = form(x)?;
            let det = fs_metric(x).determinant();
            Ok(f.top() / det)
        },
        rule,
    )?;
    Ok(v.re)
}

/// `∫ c_j(E) ∧ ω^{n−j}` for a torus-invariant metric on `E`.
pub fn chern_number_with_omega(
    j: usize,
    e_metric: &(dyn Fn(&ChartPoint) -> Result<MatrixJet> + Sync),
    rule: &QuadratureRule,
) -> Result<f64> {
    let n = rule.space.n();
    if j > n {
        return Ok(0.0);
    }
    integrate_top_form_invariant(
        &|x| {
            let cj = chern_form(j, &e_metric(x)?)?;
            cj.try_wedge(&fs_form(x).power(n - j)?)
        },
        rule,
    )
}

/// `λ_k = ∫ c_{k−N+r}(E) ∧ ω^{N+n−r−k}` where `N + 1 = dim H⁰(X, E)`.
pub fn intermediate_degree(
    k: usize,
    big_n: usize,
    e_metric: &(dyn Fn(&ChartPoint) -> Result<MatrixJet> + Sync),
    rank: usize,
    rule: &QuadratureRule,
) -> Result<f64> {
    if k > big_n || k + rank < big_n {
        return Err(LabError::Rejected(format!(
            "degree index {k} outside [{}, {big_n}]",
            big_n.saturating_sub(rank)
        )));
    }
    chern_number_with_omega(k + rank - big_n, e_metric, rule)
}

/// Largest imaginary defect of `c_k` reality symmetry, for diagnostics.
pub fn chern_reality_defect(k: usize, h: &MatrixJet) -> Result<f64> {
    Ok(chern_form(k, h)?.reality_defect())
}

/// `det(A + tI)` evaluated as `Σ_k P^{r−k}(A) t^k`, both sides as forms.
pub fn characteristic_expansion(a: &MatrixOfForms, t: C64) -> Result<Vec<FormAtPoint>> {
    (0..=a.rank)
        .map(|k| {
            invariant_polynomial(a.rank - k, a).map(|f| f.scale(t.powu(k as u32)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd_oracle::fd_jet;
    use crate::jet::{JetScalar, ONE};
    use crate::model::{fs_weight_jet, ModelSpace};
    use crate::quadrature::QuadratureRule;

    fn c(x: f64, y: f64) -> C64 {
        C64::new(x, y)
    }

    fn line_frame(x: &ChartPoint, power: u32) -> MatrixJet {
        MatrixJet::diagonal(&[fs_weight_jet(x).powi(power)])
    }

    fn split_frame(x: &ChartPoint, degrees: &[u32]) -> MatrixJet {
        let w = fs_weight_jet(x);
        MatrixJet::diagonal(&degrees.iter().map(|&d| w.powi(d)).collect::<Vec<_>>())
    }

    #[test]
    fn flat_metric_has_zero_curvature() {
        let h = MatrixJet::identity(2, 2);
        assert_eq!(curvature_from_metric_frame(&h).unwrap().max_abs(), 0.0);
        assert_eq!(chern_form(1, &h).unwrap().max_abs(), 0.0);
        assert_eq!(chern_form(2, &h).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn fs_line_curvature_matches_oracle() {
        for z in [c(0.0, 0.0), c(0.4, -0.9), c(1.5, 0.2)] {
            let x = ChartPoint::new(0, vec![z]).unwrap();
            let f = curvature_from_metric_frame(&line_frame(&x, 1)).unwrap();
            let oracle = fd_jet(
                &|w: &[C64]| c((1.0 + w[0].norm_sqr()).ln(), 0.0),
                &[z],
                1e-3,
            );
            assert!((f.coeffs[0][(0, 0)] * 2.0 * PI - oracle.mixed[0]).norm() < 1e-9);
            assert!((f.coeffs[0][(0, 0)] - fs_metric(&x)[(0, 0)]).norm() < 1e-15);
        }
    }

    #[test]
    fn power_of_line_scales_curvature() {
        let x = ChartPoint::new(0, vec![c(0.3, 0.8), c(-1.2, 0.1)]).unwrap();
        let p = 7;
        let f = chern_form(1, &line_frame(&x, p)).unwrap();
        let expect = fs_form(&x).scale(c(p as f64, 0.0));
        assert!(f.sub(&expect).max_abs() < 1e-14);
    }

    #[test]
    fn invariant_polynomials_of_diagonal() {
        let alpha = FormAtPoint::pair(0, 0, 2).scale(c(2.0, 0.0));
        let beta = FormAtPoint::pair(1, 1, 2).add(&FormAtPoint::pair(0, 1, 2));
        let a = MatrixOfForms::diagonal(&[alpha.clone(), beta.clone()]);
        assert_eq!(invariant_polynomial(0, &a).unwrap(), FormAtPoint::one(2));
        assert_eq!(invariant_polynomial(1, &a).unwrap(), alpha.add(&beta));
        assert_eq!(invariant_polynomial(2, &a).unwrap(), alpha.try_wedge(&beta).unwrap());
        assert!(invariant_polynomial(3, &a).is_err());
    }

    #[test]
    fn split_bundle_first_chern_is_sum() {
        let x = ChartPoint::new(0, vec![c(0.7, -0.3)]).unwrap();
        let c1 = chern_form(1, &split_frame(&x, &[2, 3])).unwrap();
        let a = chern_form(1, &line_frame(&x, 2)).unwrap();
        let b = chern_form(1, &line_frame(&x, 3)).unwrap();
        assert!(c1.sub(&a.add(&b)).max_abs() < 1e-15);
    }

    #[test]
    fn second_chern_number_of_two_hyperplane_bundles() {
        let rule = QuadratureRule::default_for(ModelSpace::cp2());
        let v = chern_number_with_omega(2, &|x| Ok(split_frame(x, &[1, 1])), &rule).unwrap();
        assert!((v - 1.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn degrees_of_two_hyperplane_bundles() {
        let rule = QuadratureRule::default_for(ModelSpace::cp2());
        let metric = |x: &ChartPoint| Ok(split_frame(x, &[1, 1]));
        // dim H⁰(CP², O(1)²) = 6, so N = 5.
        let top = intermediate_degree(5, 5, &metric, 2, &rule).unwrap();
        let next = intermediate_degree(4, 5, &metric, 2, &rule).unwrap();
        assert!((top - 1.0).abs() < 1e-10);
        assert!((next - 2.0).abs() < 1e-10);
        assert!(intermediate_degree(2, 5, &metric, 2, &rule).is_err());
        let line = |x: &ChartPoint| Ok(line_frame(x, 4));
        let cp1 = QuadratureRule::default_for(ModelSpace::cp1());
        // O(4) on CP¹: N = 4, λ_4 = 4.
        assert!((intermediate_degree(4, 4, &line, 1, &cp1).unwrap() - 4.0).abs() < 1e-10);
    }

    #[test]
    fn tensor_identity_examples() {
        let points = [
            ChartPoint::new(0, vec![c(0.2, 0.1), c(-0.4, 0.3)]).unwrap(),
            ChartPoint::new(1, vec![c(0.9, -0.6), c(0.1, 0.5)]).unwrap(),
        ];
        let hl = |x: &ChartPoint| fs_weight_jet(x);
        let he = |x: &ChartPoint| Ok(split_frame(x, &[1, 2]));
        let r = tensor_chern_identity_residual(3, 2, &hl, &he, &points).unwrap();
        assert!(r < 1e-8, "{r}");
        assert_eq!(tensor_chern_identity_residual(3, 0, &hl, &he, &points).unwrap(), 0.0);
        let one = |x: &ChartPoint| Ok(line_frame(x, 2));
        assert!(tensor_chern_identity_residual(5, 1, &hl, &one, &points).unwrap() < 1e-9);
    }

    #[test]
    fn reality_of_chern_forms() {
        let x = ChartPoint::new(0, vec![c(0.5, 0.5), c(-0.1, 0.7)]).unwrap();
        let w = fs_weight_jet(&x);
        let z = MixedJet2::coordinates(&x.z);
        let off = &z[0] * &JetScalar::conj(&z[1]).scale(c(0.2, 0.0));
        let h = MatrixJet::from_entries(&[
            vec![w.add_constant(ONE), off.clone()],
            vec![JetScalar::conj(&off), w.powi(2).add_constant(c(0.5, 0.0))],
        ])
        .unwrap();
        for k in 1..=2 {
            assert!(chern_reality_defect(k, &h).unwrap() < 1e-12);
        }
    }
}
