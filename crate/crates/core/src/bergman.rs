//! Bergman kernel diagonals and Kodaira pullbacks of the dual universal bundle.
//!
//! With `M(x)` the `r × dim` matrix of basis values in the frame of
//! `L^p ⊗ E`, `G` the Gram matrix and `H` the frame metric, the kernel sum
//! is `B = M G⁻¹ M*`, the Bergman endomorphism is `P = B H` and the pulled
//! back metric on `Φ_p^* T*` is `H Q` with `Q = P⁻¹`, which equals `B⁻¹`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::chern::{chern_form, curvature_coefficients, MatrixOfForms};
use crate::error::{LabError, Result};
use crate::forms::{binomial, FormAtPoint};
use crate::jet::{checked_inverse, MatrixJet, C64, DEFAULT_CONDITION_LIMIT};
use crate::model::{fs_form, fs_metric, ChartPoint, ModelSpace};
use crate::quadrature::{try_integrate_invariant, QuadratureRule};
use crate::sections::{build_space, BundleSpec, SectionSpace};
use crate::stats::{rate_slope, sup};

/// Quadrature rule exact for the untwisted Gram integrands of degree `q`
/// and ample for smooth torus-invariant twists.
pub fn rule_for_degree(space: ModelSpace, q: u32) -> QuadratureRule {
    let base = if space.n() == 1 { 48 } else { 32 };
    QuadratureRule::new(space, base.max(q as usize / 2 + 16), 16).expect("positive orders")
}

/// Build the section space of `spec` with [`rule_for_degree`].
pub fn build_default(spec: &BundleSpec) -> Result<SectionSpace> {
    let q = spec.p + spec.degrees.iter().copied().max().unwrap_or(0);
    build_space(spec, &rule_for_degree(spec.space, q))
}

#[derive(Debug, Clone)]
pub struct BergmanDiagonal {
    pub point: ChartPoint,
    /// `B = Σ_k e_k(x) e_k(x)*` with jets.
    pub kernel: MatrixJet,
    /// Frame metric `H` of `L^p ⊗ E` with jets.
    pub metric: MatrixJet,
    /// `P = B H`, the Bergman endomorphism in the standard frame.
    pub endomorphism: MatrixJet,
}

impl BergmanDiagonal {
    /// `P` in an `h`-orthonormal frame: `L_H* B L_H` with `H = L_H L_H*`.
    pub fn unitary_matrix(&self) -> Result<DMatrix<C64>> {
        let chol = self
            .metric
            .value
            .clone()
            .cholesky()
            .ok_or_else(|| LabError::SingularInput("metric not positive definite".into()))?;
        let l = chol.l();
        Ok(l.adjoint() * &self.kernel.value * l)
    }
}

pub fn bergman_diagonal(space: &SectionSpace, x: &ChartPoint) -> Result<BergmanDiagonal> {
    let (f, df) = space.orthonormal_frame(x);
    let kernel = MatrixJet::holomorphic_gram(&f, &df);
    let metric = space.spec.full_metric(x)?;
    let endomorphism = kernel.try_mul(&metric)?;
    Ok(BergmanDiagonal {
        point: x.clone(),
        kernel,
        metric,
        endomorphism,
    })
}

/// `H Q` with `Q = P⁻¹`: the pulled-back metric of the dual universal bundle.
pub fn kodaira_pullback_metric(space: &SectionSpace, x: &ChartPoint) -> Result<MatrixJet> {
    let b = bergman_diagonal(space, x)?;
    b.metric.try_mul(&b.endomorphism.inverse()?)
}

/// `B⁻¹`, the same metric computed without the frame metric.
pub fn kodaira_pullback_metric_direct(space: &SectionSpace, x: &ChartPoint) -> Result<MatrixJet> {
    bergman_diagonal(space, x)?.kernel.inverse()
}

/// `Φ_p^* c_k(T*, h^{T*})` at `x`.
pub fn pullback_chern_form(k: usize, space: &SectionSpace, x: &ChartPoint) -> Result<FormAtPoint> {
    chern_form(k, &kodaira_pullback_metric(space, x)?)
}

/// Gap between the pullback curvature and `Q⁻¹(R^{L^p⊗E} + A_p)Q`, with
/// `A_p` built from the jets of `Q` and of the frame metric of `E`.
pub fn curvature_transfer_residual(space: &SectionSpace, x: &ChartPoint) -> Result<f64> {
    let b = bergman_diagonal(space, x)?;
    let q = b.endomorphism.inverse()?;
    let pullback = b.metric.try_mul(&q)?;
    let lhs = curvature_coefficients(&pullback)?;
    let rho = curvature_coefficients(&b.metric)?;
    let he = space.spec.e_metric(x);
    let he_inv = checked_inverse(&he.value, DEFAULT_CONDITION_LIMIT)?;
    let m = x.n();
    let q0 = &q.value;
    let q0_inv = &b.endomorphism.value;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for a in 0..m {
        let hat = &he_inv * &he.d[a];
        for bb in 0..m {
            let qa = &q.d[a];
            let qb = &q.dbar[bb];
            let qab = &q.mixed[a * m + bb];
            let corr = qb * q0_inv * qa * q0_inv - qab * q0_inv - &hat * qb * q0_inv
                + qb * q0_inv * &hat;
            let rhs = q0_inv * (&rho[a * m + bb] + corr) * q0;
            let l = &lhs[a * m + bb];
            worst = worst.max((l - &rhs).norm());
            scale = scale.max(l.norm());
        }
    }
    Ok(worst / scale)
}

/// `(i/2π)` curvature of the pullback metric.
pub fn pullback_curvature(space: &SectionSpace, x: &ChartPoint) -> Result<MatrixOfForms> {
    crate::chern::curvature_from_metric_frame(&kodaira_pullback_metric(space, x)?)
}

/// Pointwise norm of a form against the Fubini–Study metric at `x`.
pub fn fs_norm(form: &FormAtPoint, x: &ChartPoint) -> Result<f64> {
    form.norm_with_metric(&fs_metric(x))
}

/// `∫ tr P ω^n/n!`, which equals `dim V_p`.
pub fn trace_integral(space: &SectionSpace, rule: &QuadratureRule) -> Result<f64> {
    let v = try_integrate_invariant(
        |x| Ok(bergman_diagonal(space, x)?.endomorphism.value.trace()),
        rule,
    )?;
    Ok(v.re)
}

/// `b_0 = c_1(L,h)^n / ω^n`, times the identity.
pub fn leading_coefficient(spec: &BundleSpec, x: &ChartPoint) -> Result<f64> {
    let n = x.n();
    let c1 = crate::chern::first_chern_of_weight(&spec.line_weight(x))?;
    let top = c1.power(n)?.top();
    let vol = fs_form(x).power(n)?.top();
    Ok((top / vol).re)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionReport {
    pub grid: Vec<usize>,
    /// `sup_x ‖P_p(x,x) − pⁿ b_0(x)‖`.
    pub residuals: Vec<f64>,
    pub exponent: f64,
}

/// Leading-order Bergman expansion residuals and their growth exponent.
pub fn bergman_expansion_check(
    spec: &BundleSpec,
    grid: &[usize],
    points: &[ChartPoint],
) -> Result<ExpansionReport> {
    let n = spec.space.n();
    let r = spec.rank();
    let residuals: Result<Vec<f64>> = grid
        .iter()
        .map(|&p| {
            let space = build_default(&spec.with_p(p as u32))?;
            let vals: Result<Vec<f64>> = points
                .par_iter()
                .map(|x| {
                    let b = bergman_diagonal(&space, x)?;
                    let pu = b.unitary_matrix()?;
                    let b0 = leading_coefficient(&space.spec, x)?;
                    let target = DMatrix::<C64>::identity(r, r) * C64::new((p as f64).powi(n as i32) * b0, 0.0);
                    Ok((pu - target).norm())
                })
                .collect();
            Ok(sup(vals?))
        })
        .collect();
    let residuals = residuals?;
    let exponent = rate_slope(grid, &residuals)?;
    Ok(ExpansionReport {
        grid: grid.to_vec(),
        residuals,
        exponent,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TianResidualReport {
    pub k: usize,
    pub grid: Vec<usize>,
    pub residual1: Vec<f64>,
    pub residual2: Option<Vec<f64>>,
    pub slope1: f64,
    pub slope2: Option<f64>,
}

/// Reference forms `c_1(L,h)^k` and, when prequantum,
/// `c_1(E,h) ∧ ω^{k−1}` at `x`.
fn tian_references(spec: &BundleSpec, k: usize, x: &ChartPoint) -> Result<(FormAtPoint, FormAtPoint)> {
    let c1l = crate::chern::first_chern_of_weight(&spec.line_weight(x))?;
    let lead = c1l.power(k)?;
    let sub = if k == 0 {
        FormAtPoint::zero(0, x.n())
    } else {
        chern_form(1, &spec.e_metric(x))?.try_wedge(&fs_form(x).power(k - 1)?)?
    };
    Ok((lead, sub))
}

/// First- and second-order residuals of the normalized pullback Chern forms.
pub fn tian_residual(
    k: usize,
    spec: &BundleSpec,
    grid: &[usize],
    points: &[ChartPoint],
) -> Result<TianResidualReport> {
    let r = spec.rank();
    if k > r {
        return Err(LabError::Rejected(format!("k = {k} exceeds rank {r}")));
    }
    if grid.len() < 4 {
        return Err(LabError::Rejected(format!(
            "rate fit needs a grid of at least 4 points, got {}",
            grid.len()
        )));
    }
    let prequantum = spec.is_prequantum();
    let mut res1 = Vec::with_capacity(grid.len());
    let mut res2 = Vec::with_capacity(grid.len());
    for &p in grid {
        let space = build_default(&spec.with_p(p as u32))?;
        let pairs: Result<Vec<(f64, f64)>> = points
            .par_iter()
            .map(|x| {
                let pf = pullback_chern_form(k, &space, x)?
                    .scale(C64::new((p as f64).powi(-(k as i32)), 0.0));
                let (lead, sub) = tian_references(spec, k, x)?;
                let first = pf.sub(&lead.scale(C64::new(binomial(r, k) as f64, 0.0)));
                let second = if k == 0 {
                    first.clone()
                } else {
                    first.sub(&sub.scale(C64::new(binomial(r - 1, k - 1) as f64 / p as f64, 0.0)))
                };
                Ok((fs_norm(&first, x)?, fs_norm(&second, x)?))
            })
            .collect();
        let pairs = pairs?;
        res1.push(sup(pairs.iter().map(|v| v.0)));
        res2.push(sup(pairs.iter().map(|v| v.1)));
    }
    let slope1 = rate_slope(grid, &res1)?;
    let (residual2, slope2) = if prequantum {
        let s = rate_slope(grid, &res2)?;
        (Some(res2), Some(s))
    } else {
        (None, None)
    };
    Ok(TianResidualReport {
        k,
        grid: grid.to_vec(),
        residual1: res1,
        residual2,
        slope1,
        slope2,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseBoundReport {
    pub k: usize,
    pub grid: Vec<usize>,
    /// `sup_x ‖Φ_p^* c_k(T*) − c_k(L^p ⊗ E, h)‖`.
    pub residuals: Vec<f64>,
    pub exponent: f64,
}

/// Growth of the gap between pulled-back and induced Chern forms.
pub fn pointwise_bound(
    k: usize,
    spec: &BundleSpec,
    grid: &[usize],
    points: &[ChartPoint],
) -> Result<PointwiseBoundReport> {
    let mut residuals = Vec::with_capacity(grid.len());
    for &p in grid {
        let space = build_default(&spec.with_p(p as u32))?;
        let vals: Result<Vec<f64>> = points
            .par_iter()
            .map(|x| {
                let pf = pullback_chern_form(k, &space, x)?;
                let induced = chern_form(k, &space.spec.full_metric(x)?)?;
                fs_norm(&pf.sub(&induced), x)
            })
            .collect();
        residuals.push(sup(vals?));
    }
    let exponent = rate_slope(grid, &residuals)?;
    Ok(PointwiseBoundReport {
        k,
        grid: grid.to_vec(),
        residuals,
        exponent,
    })
}

/// `(∫ Φ_p^* c_k ∧ ω^{n−k}, ∫ c_k(L^p ⊗ E, h) ∧ ω^{n−k})`.
pub fn pullback_class_integrals(
    k: usize,
    space: &SectionSpace,
    rule: &QuadratureRule,
) -> Result<(f64, f64)> {
    let n = space.n();
    let pulled = crate::chern::integrate_top_form_invariant(
        &|x| pullback_chern_form(k, space, x)?.try_wedge(&fs_form(x).power(n - k)?),
        rule,
    )?;
    let induced = crate::chern::chern_number_with_omega(k, &|x| space.spec.full_metric(x), rule)?;
    Ok((pulled, induced))
}
