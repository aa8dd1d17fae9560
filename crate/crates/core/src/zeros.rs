//! Zero and degeneracy sets of random sections as weighted point measures,
//! and the Monte Carlo experiments built on them.
//!
//! A curve `C ⊂ CP^2` is paired with a function through `∫_C φ ω`, which is
//! estimated with one random line per sample: for lines drawn from the
//! unitarily invariant measure, `E Σ_{x ∈ C ∩ ℓ} φ(x) = ∫_C φ ω`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::bergman::{build_default, pullback_chern_form, rule_for_degree};
use crate::chern::{chern_form, first_chern_of_weight};
use crate::error::{LabError, Result};
use crate::forms::{permutations, wedge, FormAtPoint};
use crate::jet::{JetScalar, MixedJet2, C64, ZERO};
use crate::model::{fs_form, fs_metric, ChartPoint, ModelSpace};
use crate::poly::{section_polynomials, HomPoly};
use crate::quadrature::QuadratureRule;
use crate::rng::stream;
use crate::roots::{common_zeros_cp2, random_unitary, roots_on_cp1};
use crate::sections::{
    exponents, sample_fs_section, sample_gaussian_section, BundleSpec, SectionCoeffs, SectionSpace,
};
use crate::stats::{mean_se, pairwise_sum, pairwise_sum_c, sup};

/// Redraws allowed for one sample before the experiment gives up.
pub const MAX_REDRAWS: usize = 16;

/// `det(entries)` where every entry of row `i` has the same degree `q_i`;
/// the result has degree `Σ q_i`.
pub fn determinant_hom(entries: &[Vec<HomPoly>]) -> Result<HomPoly> {
    let r = entries.len();
    if r == 0 || entries.iter().any(|row| row.len() != r) {
        return Err(LabError::Rejected("determinant needs a nonempty square matrix".into()));
    }
    let n = entries[0][0].n;
    for row in entries {
        if row.iter().any(|f| f.n != n || f.q != row[0].q) {
            return Err(LabError::Rejected(
                "determinant entries must share the space and, within a row, the degree".into(),
            ));
        }
    }
    let q: u32 = entries.iter().map(|row| row[0].q).sum();
    let mut out = HomPoly::new(n, q, vec![ZERO; exponents(n, q).len()])?;
    let cols: Vec<usize> = (0..r).collect();
    for (perm, sign) in permutations(&cols) {
        let mut term = entries[0][perm[0]].clone();
        for (i, &j) in perm.iter().enumerate().skip(1) {
            term = term.mul(&entries[i][j]);
        }
        for (o, t) in out.coeffs.iter_mut().zip(&term.coeffs) {
            *o += t * sign;
        }
    }
    Ok(out)
}

/// Determinant of an `r × r` matrix of sections of `O(p)` on CP^1 given as
/// coefficient vectors `c_j ↔ Z_0^{p−j} Z_1^j`; the result lies in `O(rp)`.
pub fn determinant_section(entries: &[Vec<Vec<C64>>]) -> Result<Vec<C64>> {
    let polys: Vec<Vec<HomPoly>> = entries
        .iter()
        .map(|row| row.iter().map(|c| HomPoly::from_univariate(c)).collect())
        .collect();
    determinant_hom(&polys)?.univariate()
}

/// The test functions used against zero currents. All are real and invariant
/// under rescaling of homogeneous coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestFunction {
    One,
    /// `Re(u_1 ū_0) · exp(−2 (t_0 − t_1)²)` with `u = Z / ‖Z‖`, `t_k = |u_k|²`.
    ReBump,
    /// `exp(−4 (1 − t_0))`, peaked at `[1 : 0 : …]`.
    RadialBump,
    /// `|t_0 − 1/2|³`: C² but not C³ across the hypersurface `t_0 = 1/2`.
    CubicKink,
}

impl TestFunction {
    pub const BATTERY: [TestFunction; 4] = [
        TestFunction::One,
        TestFunction::ReBump,
        TestFunction::RadialBump,
        TestFunction::CubicKink,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TestFunction::One => "one",
            TestFunction::ReBump => "re-bump",
            TestFunction::RadialBump => "radial-bump",
            TestFunction::CubicKink => "cubic-kink",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::BATTERY.into_iter().find(|f| f.name() == name)
    }

    pub fn eval_homogeneous<S: JetScalar>(&self, z: &[S]) -> S {
        let norm = z[1..].iter().fold(z[0].abs_sq(), |acc, x| acc + x.abs_sq());
        let inv = norm.recip_unchecked();
        let t = |k: usize| z[k].abs_sq() * inv.clone();
        let real = |x: f64| C64::new(x, 0.0);
        match self {
            TestFunction::One => z[0].real_const(1.0),
            TestFunction::ReBump => {
                let d = t(0) - t(1);
                (z[1].clone() * z[0].conj()).re() * inv.clone() * (d.clone() * d).scale(real(-2.0)).exp()
            }
            TestFunction::RadialBump => (t(0) - z[0].real_const(1.0)).scale(real(4.0)).exp(),
            TestFunction::CubicKink => {
                let d = t(0) - z[0].real_const(0.5);
                let sign = if d.value().re >= 0.0 { 1.0 } else { -1.0 };
                (d.clone() * d.clone() * d).scale(real(sign))
            }
        }
    }

    pub fn value(&self, x: &ChartPoint) -> f64 {
        self.eval_homogeneous(&x.homogeneous()).re
    }

    /// Mixed 2-jet in the chart of `x`.
    pub fn jet(&self, x: &ChartPoint) -> MixedJet2 {
        let n = x.n();
        let coords = MixedJet2::coordinates(&x.z);
        let mut hom = vec![MixedJet2::real(1.0, n); n + 1];
        for (a, c) in coords.into_iter().enumerate() {
            hom[x.homogeneous_index(a)] = c;
        }
        self.eval_homogeneous(&hom)
    }

    /// `sup|φ| + sup|∂φ|_ω + sup‖∂∂̄φ‖_ω` over the nodes of `rule`, a proxy
    /// for the C² norm.
    pub fn c2_norm(&self, rule: &QuadratureRule) -> Result<f64> {
        let parts: Result<Vec<(f64, f64, f64)>> = rule
            .nodes()
            .par_iter()
            .map(|(x, _)| {
                let j = self.jet(x);
                let g = fs_metric(x);
                let n = x.n();
                let ginv = g
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| LabError::SingularInput("Fubini–Study metric".into()))?;
                let d = DVector::from_vec(j.d.clone());
                // |α|² = ᾱᵀ g⁻¹ α is chart independent for α = ∂φ.
                let grad = (d.adjoint() * ginv * &d)[(0, 0)].re.abs().sqrt();
                let hess = DMatrix::from_fn(n, n, |a, b| j.mixed_at(a, b));
                let h = FormAtPoint::from_matrix(&hess).norm_with_metric(&g)?;
                Ok((j.value.re.abs(), grad, h))
            })
            .collect();
        let parts = parts?;
        Ok(sup(parts.iter().map(|p| p.0)) + sup(parts.iter().map(|p| p.1)) + sup(parts.iter().map(|p| p.2)))
    }
}

/// `∫ φ α` for a torus-invariant top form `α`, evaluated once per torus orbit
/// of `rule` against the orbit average of `φ`.
pub fn pair_invariant_top_form(
    phi: TestFunction,
    form: &(dyn Fn(&ChartPoint) -> Result<FormAtPoint> + Sync),
    rule: &QuadratureRule,
) -> Result<f64> {
    let values: Result<Vec<C64>> = rule
        .orbits()
        .par_iter()
        .map(|(rep, w, orbit)| {
            let density = form(rep)?.top() / fs_metric(rep).determinant();
            let avg = pairwise_sum(&orbit.iter().map(|x| phi.value(x)).collect::<Vec<_>>())
                / orbit.len() as f64;
            Ok(density * avg * *w)
        })
        .collect();
    let v = pairwise_sum_c(&values?);
    if !v.is_finite() {
        return Err(LabError::Evaluation("paired top form".into()));
    }
    Ok(v.re)
}

/// `∫ φ ω^n`; exactly 1 for the constant function.
pub fn fs_integral(phi: TestFunction, rule: &QuadratureRule) -> Result<f64> {
    if phi == TestFunction::One {
        return Ok(1.0);
    }
    let n = rule.space.n();
    pair_invariant_top_form(phi, &|x| fs_form(x).power(n), rule)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeasureKind {
    /// Standard Gaussian in the L² inner product.
    Gaussian,
    /// Uniform on the L² unit sphere, i.e. Fubini–Study on the projectivization.
    FubiniStudy,
}

impl MeasureKind {
    pub fn name(&self) -> &'static str {
        match self {
            MeasureKind::Gaussian => "gaussian",
            MeasureKind::FubiniStudy => "fubini-study",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [MeasureKind::Gaussian, MeasureKind::FubiniStudy]
            .into_iter()
            .find(|k| k.name() == name)
    }

    pub fn sample<R: Rng + ?Sized>(&self, space: &SectionSpace, rng: &mut R) -> SectionCoeffs {
        match self {
            MeasureKind::Gaussian => sample_gaussian_section(space, rng),
            MeasureKind::FubiniStudy => sample_fs_section(space, rng),
        }
    }
}

/// A zero or degeneracy set as equally weighted points.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub points: Vec<ChartPoint>,
    /// Every point carries mass `1 / normalizer`, e.g. `normalizer = p^r`.
    pub normalizer: f64,
    pub p: u32,
    pub r: usize,
    pub seed: u64,
    pub index: u64,
    pub redraws: usize,
    pub max_residual: f64,
    pub warnings: Vec<String>,
}

impl EmpiricalMeasure {
    pub fn weight(&self) -> f64 {
        1.0 / self.normalizer
    }
}

/// `weight · Σ φ(x)` over the points of `mu`.
pub fn pair_measure(mu: &EmpiricalMeasure, phi: impl Fn(&ChartPoint) -> f64) -> f64 {
    let values: Vec<f64> = mu.points.iter().map(phi).collect();
    pairwise_sum(&values) / mu.normalizer
}

fn is_degenerate(e: &LabError) -> bool {
    matches!(e, LabError::DegenerateSample(_) | LabError::Rejected(_))
}

/// Run `attempt` until it returns something other than a degenerate-sample
/// error, counting the redraws.
fn with_redraws<R: Rng + ?Sized, T>(
    rng: &mut R,
    mut attempt: impl FnMut(&mut R) -> Result<T>,
) -> Result<(T, usize)> {
    for redraws in 0..=MAX_REDRAWS {
        match attempt(rng) {
            Ok(v) => return Ok((v, redraws)),
            Err(e) if is_degenerate(&e) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(LabError::DegenerateSample(format!(
        "{MAX_REDRAWS} consecutive redraws were degenerate"
    )))
}

/// `[s = 0]` for one random section of `L^p ⊗ E` with `rank E = n`,
/// weighted by `p^{−n}`.
pub fn sample_zero_measure(
    space: &SectionSpace,
    kind: MeasureKind,
    seed: u64,
    label: &str,
    index: u64,
) -> Result<EmpiricalMeasure> {
    let n = space.n();
    let r = space.rank();
    if r != n {
        return Err(LabError::Unsupported {
            requested: format!("zeros of one section with rank {r} on CP^{n}"),
            supported: "rank equal to the dimension (CP^1 rank 1, CP^2 rank 2)".into(),
        });
    }
    let mut rng = stream(seed, label, index);
    let ((points, max_residual, warnings), redraws) = with_redraws(&mut rng, |rng| {
        let s = kind.sample(space, rng);
        let polys = section_polynomials(space, &s);
        if n == 1 {
            let set = roots_on_cp1(&polys[0].univariate()?)?;
            Ok((set.roots, set.max_residual, set.warning.into_iter().collect::<Vec<_>>()))
        } else {
            let z = common_zeros_cp2(&polys[0], &polys[1], rng)?;
            let expected = (polys[0].q * polys[1].q) as usize;
            let mut warnings = Vec::new();
            if !z.is_complete(expected) {
                warnings.push(format!(
                    "incomplete common zeros: {} of {expected}, residual {:.3e}, separation {:.3e}",
                    z.roots.len(),
                    z.max_residual,
                    z.min_separation
                ));
            }
            Ok((z.roots, z.max_residual, warnings))
        }
    })?;
    Ok(EmpiricalMeasure {
        points,
        normalizer: f64::from(space.spec.p).powi(n as i32),
        p: space.spec.p,
        r,
        seed,
        index,
        redraws,
        max_residual,
        warnings,
    })
}

/// Per-`p` results of the equidistribution experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct EquidistributionRow {
    pub p: u32,
    /// `|⟨p^{−n}[s = 0], φ⟩ − ∫ φ ω^n|` for sample 0, per test function.
    pub single: Vec<f64>,
    /// Mean and standard error of that error over all samples.
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    /// `mean · p / (log p · ‖φ‖_{C²})`.
    pub ratio: Vec<f64>,
    /// Largest `ratio` over the grid up to this `p`: the fitted constant.
    pub fitted: Vec<f64>,
    /// Fraction of samples whose error exceeds the final fitted bound.
    pub tail_fraction: Vec<f64>,
    pub expected_count: usize,
    /// Samples whose point count differs from the Bézout count.
    pub count_mismatches: usize,
    pub redraws: usize,
    pub warnings: usize,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquidistributionReport {
    pub space: ModelSpace,
    pub battery: Vec<TestFunction>,
    pub norms: Vec<f64>,
    pub targets: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub rows: Vec<EquidistributionRow>,
}

/// Pairing errors of normalized zero measures against `ω^n` over a grid of
/// powers, for `rank E = n`.
pub fn equidistribution_experiment(
    base: &BundleSpec,
    grid: &[u32],
    samples: usize,
    battery: &[TestFunction],
    seed: u64,
) -> Result<EquidistributionReport> {
    let n = base.space.n();
    if base.rank() != n {
        return Err(LabError::Unsupported {
            requested: format!("equidistribution with rank {} on CP^{n}", base.rank()),
            supported: "CP^1 with rank 1, CP^2 with rank 2".into(),
        });
    }
    if samples == 0 || grid.is_empty() || grid.iter().any(|&p| p < 2) {
        return Err(LabError::Rejected(
            "need at least one sample and a grid of powers ≥ 2".into(),
        ));
    }
    let rule = QuadratureRule::default_for(base.space);
    let norms = battery.iter().map(|f| f.c2_norm(&rule)).collect::<Result<Vec<_>>>()?;
    let targets = battery.iter().map(|f| fs_integral(*f, &rule)).collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(grid.len());
    let mut all_errors: Vec<Vec<Vec<f64>>> = Vec::with_capacity(grid.len());
    for &p in grid {
        let space = build_default(&base.with_p(p))?;
        let label = format!("equidistribution/cp{n}/p={p}");
        let measures = (0..samples as u64)
            .into_par_iter()
            .map(|i| sample_zero_measure(&space, MeasureKind::Gaussian, seed, &label, i))
            .collect::<Result<Vec<_>>>()?;
        let errors: Vec<Vec<f64>> = battery
            .iter()
            .zip(&targets)
            .map(|(f, target)| {
                measures
                    .iter()
                    .map(|mu| (pair_measure(mu, |x| f.value(x)) - target).abs())
                    .collect()
            })
            .collect();
        let expected_count = base.degrees.iter().map(|d| (p + d) as usize).product();
        let stats: Vec<_> = errors.iter().map(|e| mean_se(e)).collect();
        let log_rate = (p as f64).ln() / p as f64;
        rows.push(EquidistributionRow {
            p,
            single: errors.iter().map(|e| e[0]).collect(),
            mean: stats.iter().map(|s| s.mean).collect(),
            mean_se: stats.iter().map(|s| s.se).collect(),
            ratio: stats
                .iter()
                .zip(&norms)
                .map(|(s, nrm)| s.mean / (log_rate * nrm))
                .collect(),
            fitted: Vec::new(),
            tail_fraction: Vec::new(),
            expected_count,
            count_mismatches: measures.iter().filter(|m| m.points.len() != expected_count).count(),
            redraws: measures.iter().map(|m| m.redraws).sum(),
            warnings: measures.iter().map(|m| m.warnings.len()).sum(),
            max_residual: sup(measures.iter().map(|m| m.max_residual)),
        });
        all_errors.push(errors);
    }
    for j in 0..battery.len() {
        let mut envelope = 0.0_f64;
        for row in rows.iter_mut() {
            envelope = envelope.max(row.ratio[j]);
            row.fitted.push(envelope);
        }
        let c = envelope;
        for (row, errors) in rows.iter_mut().zip(&all_errors) {
            let p = row.p as f64;
            let bound = c * p.ln() / p * norms[j];
            let over = errors[j].iter().filter(|e| **e > bound).count();
            row.tail_fraction.push(over as f64 / samples as f64);
        }
    }
    Ok(EquidistributionReport {
        space: base.space,
        battery: battery.to_vec(),
        norms,
        targets,
        samples,
        seed,
        rows,
    })
}

/// The implemented geometric settings for degeneracy currents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `k = r`: the zeros of `s_1 ∧ … ∧ s_r`, a divisor (points on CP^1, a
    /// curve on CP^2 paired through random lines).
    Divisor,
    /// CP^2 with `r = 2`, `k = 1`: the common zeros of one section.
    Points,
}

pub const SUPPORTED_REGIMES: &str =
    "CP^1 with k = r; CP^2 with k = r ∈ {1, 2}; CP^2 with r = 2 and k = 1";

pub fn regime(spec: &BundleSpec, k: usize) -> Result<Regime> {
    let n = spec.space.n();
    let r = spec.rank();
    let unsupported = || LabError::Unsupported {
        requested: format!("CP^{n}, rank {r}, k = {k}"),
        supported: SUPPORTED_REGIMES.into(),
    };
    match (n, r, k) {
        (_, _, 0) => Err(unsupported()),
        (1, r, k) if k == r => Ok(Regime::Divisor),
        (2, 1, 1) | (2, 2, 2) => Ok(Regime::Divisor),
        (2, 2, 1) => Ok(Regime::Points),
        _ => Err(unsupported()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationEstimate {
    pub function: TestFunction,
    pub kind: MeasureKind,
    pub k: usize,
    pub p: u32,
    pub samples: usize,
    /// Mean of `p^{−(r+1−k)} ⟨[D_k], φ⟩` and its standard error.
    pub mean: f64,
    pub se: f64,
    /// `p^{−(r+1−k)} ∫ φ Φ_p^* c_{r+1−k}(T*) ∧ ω^{n−r−1+k}` by quadrature.
    pub prediction: f64,
    /// `∫ φ (r c_1(L) + c_1(E)/p) ∧ ω^{n−1}`, available when `k = r`.
    pub two_term: Option<f64>,
    pub expected_count: usize,
    pub count_mismatches: usize,
    pub redraws: usize,
    pub warnings: usize,
}

impl ExpectationEstimate {
    /// `|mean − prediction|` in units of the standard error.
    pub fn deviation(&self) -> f64 {
        sigma_deviation(self.mean - self.prediction, self.se)
    }
}

struct DegeneracySample {
    values: Vec<f64>,
    count: usize,
    redraws: usize,
    warning: bool,
}

fn sample_degeneracy(
    space: &SectionSpace,
    k: usize,
    regime: Regime,
    kind: MeasureKind,
    battery: &[TestFunction],
    rng: &mut rand_chacha::ChaCha20Rng,
) -> Result<DegeneracySample> {
    let n = space.n();
    let r = space.rank();
    let normalizer = f64::from(space.spec.p).powi((r + 1 - k) as i32);
    let ((points, warning), redraws) = with_redraws(rng, |rng| match regime {
        Regime::Divisor => {
            let sections: Vec<Vec<HomPoly>> = (0..k)
                .map(|_| section_polynomials(space, &kind.sample(space, rng)))
                .collect();
            // Row `i` is summand `i`, column `j` is section `j`.
            let entries: Vec<Vec<HomPoly>> = (0..r)
                .map(|i| sections.iter().map(|s| s[i].clone()).collect())
                .collect();
            let det = determinant_hom(&entries)?;
            if n == 1 {
                let set = roots_on_cp1(&det.univariate()?)?;
                Ok((set.roots, set.warning.is_some()))
            } else {
                let u = random_unitary(3, rng);
                let a: Vec<C64> = (0..3).map(|i| u[(i, 0)]).collect();
                let b: Vec<C64> = (0..3).map(|i| u[(i, 1)]).collect();
                let (c, _) = det.compose_affine(&a, &b, None);
                let set = roots_on_cp1(&c)?;
                let points = set
                    .roots
                    .iter()
                    .map(|t| {
                        let h = t.homogeneous();
                        let z: Vec<C64> = (0..3).map(|i| a[i] * h[0] + b[i] * h[1]).collect();
                        ChartPoint::best_from_homogeneous(&z)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let warning = set.warning.is_some() || sup(points.iter().map(|x| det.normalized_residual(x))) > crate::roots::ROOT_RESIDUAL_WARNING;
                Ok((points, warning))
            }
        }
        Regime::Points => {
            let polys = section_polynomials(space, &kind.sample(space, rng));
            let z = common_zeros_cp2(&polys[0], &polys[1], rng)?;
            let expected = (polys[0].q * polys[1].q) as usize;
            Ok((z.roots.clone(), !z.is_complete(expected)))
        }
    })?;
    let values = battery
        .iter()
        .map(|f| {
            let v: Vec<f64> = points.iter().map(|x| f.value(x)).collect();
            pairwise_sum(&v) / normalizer
        })
        .collect();
    Ok(DegeneracySample {
        values,
        count: points.len(),
        redraws,
        warning,
    })
}

/// Monte Carlo estimate of the expected normalized degeneracy current of `k`
/// random sections, with the pullback prediction.
pub fn expectation_experiment(
    spec: &BundleSpec,
    k: usize,
    samples: usize,
    battery: &[TestFunction],
    kind: MeasureKind,
    seed: u64,
) -> Result<Vec<ExpectationEstimate>> {
    let regime = regime(spec, k)?;
    if samples < 2 {
        return Err(LabError::Rejected("need at least two samples".into()));
    }
    let n = spec.space.n();
    let r = spec.rank();
    let m = r + 1 - k;
    let space = build_default(spec)?;
    let p = spec.p;
    let total_degree: u32 = spec.degrees.iter().map(|d| p + d).sum();
    let expected_count = match regime {
        Regime::Divisor => total_degree as usize,
        Regime::Points => spec.degrees.iter().map(|d| (p + d) as usize).product(),
    };

    let label = format!(
        "expectation/cp{n}/r={r}/k={k}/p={p}/{}",
        kind.name()
    );
    let draws = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &label, i);
            sample_degeneracy(&space, k, regime, kind, battery, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    let rule = rule_for_degree(spec.space, total_degree);
    let scale = f64::from(p).powi(m as i32);
    let mut out = Vec::with_capacity(battery.len());
    for (j, &phi) in battery.iter().enumerate() {
        let values: Vec<f64> = draws.iter().map(|d| d.values[j]).collect();
        let stats = mean_se(&values);
        let pulled = pair_invariant_top_form(
            phi,
            &|x| {
                let c = pullback_chern_form(m, &space, x)?;
                wedge(&c, &fs_form(x).power(n - m)?)
            },
            &rule,
        )? / scale;
        let two_term = if k == r {
            let v = pair_invariant_top_form(
                phi,
                &|x| {
                    let line = first_chern_of_weight(&spec.line_weight(x))?
                        .scale(C64::new(r as f64, 0.0));
                    let e = chern_form(1, &spec.e_metric(x))?.scale(C64::new(1.0 / p as f64, 0.0));
                    wedge(&line.add(&e), &fs_form(x).power(n - 1)?)
                },
                &rule,
            )?;
            Some(v)
        } else {
            None
        };
        out.push(ExpectationEstimate {
            function: phi,
            kind,
            k,
            p,
            samples,
            mean: stats.mean,
            se: stats.se,
            prediction: pulled,
            two_term,
            expected_count,
            count_mismatches: draws.iter().filter(|d| d.count != expected_count).count(),
            redraws: draws.iter().map(|d| d.redraws).sum(),
            warnings: draws.iter().filter(|d| d.warning).count(),
        });
    }
    Ok(out)
}

/// `|difference|` in standard errors; a zero standard error (exact
/// quantities such as total mass) allows only rounding.
pub fn sigma_deviation(difference: f64, se: f64) -> f64 {
    if se > 0.0 {
        difference.abs() / se
    } else if difference.abs() <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Difference of two independent estimates of the same quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub function: TestFunction,
    pub difference: f64,
    pub combined_se: f64,
}

impl Comparison {
    pub fn deviation(&self) -> f64 {
        sigma_deviation(self.difference, self.combined_se)
    }
}

/// `a − b` per test function, with `√(se_a² + se_b²)`.
pub fn compare_estimates(a: &[ExpectationEstimate], b: &[ExpectationEstimate]) -> Result<Vec<Comparison>> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.function != y.function) {
        return Err(LabError::Rejected("estimates cover different test functions".into()));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| Comparison {
            function: x.function,
            difference: x.mean - y.mean,
            combined_se: x.se.hypot(y.se),
        })
        .collect())
}

/// How a change of the metric on `E` moves the expected current.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftEstimate {
    pub comparison: Comparison,
    /// Difference of the two-term expansions: the `1/p` curvature term.
    pub predicted_subleading: f64,
    /// Difference of the exact pullback predictions.
    pub predicted_exact: f64,
}

impl ShiftEstimate {
    /// `|shift − predicted_subleading|` in combined standard errors.
    pub fn deviation(&self) -> f64 {
        sigma_deviation(
            self.comparison.difference - self.predicted_subleading,
            self.comparison.combined_se,
        )
    }
}

pub fn twist_shift(twisted: &[ExpectationEstimate], plain: &[ExpectationEstimate]) -> Result<Vec<ShiftEstimate>> {
    let comps = compare_estimates(twisted, plain)?;
    comps
        .into_iter()
        .zip(twisted.iter().zip(plain))
        .map(|(c, (t, u))| {
            let (Some(a), Some(b)) = (t.two_term, u.two_term) else {
                return Err(LabError::Rejected("shift needs k = r estimates".into()));
            };
            Ok(ShiftEstimate {
                comparison: c,
                predicted_subleading: a - b,
                predicted_exact: t.prediction - u.prediction,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::complex_gaussians;

    fn c(x: f64, y: f64) -> C64 {
        C64::new(x, y)
    }

    fn random_univariate(q: usize, rng: &mut rand_chacha::ChaCha20Rng) -> Vec<C64> {
        complex_gaussians(rng, q + 1)
    }

    #[test]
    fn diagonal_determinant_is_product() {
        let mut rng = stream(1, "det", 0);
        let f = random_univariate(3, &mut rng);
        let g = random_univariate(3, &mut rng);
        let zero = vec![ZERO; 4];
        let det = determinant_section(&[vec![f.clone(), zero.clone()], vec![zero, g.clone()]]).unwrap();
        let want = crate::poly::poly_mul(&f, &g);
        assert_eq!(det.len(), want.len());
        for (a, b) in det.iter().zip(&want) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn row_swap_negates() {
        let mut rng = stream(1, "det", 1);
        let e: Vec<Vec<C64>> = (0..4).map(|_| random_univariate(3, &mut rng)).collect();
        let d1 = determinant_section(&[vec![e[0].clone(), e[1].clone()], vec![e[2].clone(), e[3].clone()]]).unwrap();
        let d2 = determinant_section(&[vec![e[2].clone(), e[3].clone()], vec![e[0].clone(), e[1].clone()]]).unwrap();
        for (a, b) in d1.iter().zip(&d2) {
            assert!((a + b).norm() < 1e-14);
        }
    }

    #[test]
    fn determinant_matches_pointwise_evaluation() {
        let mut rng = stream(1, "det", 2);
        let e: Vec<Vec<C64>> = (0..4).map(|_| random_univariate(3, &mut rng)).collect();
        let det = determinant_section(&[vec![e[0].clone(), e[1].clone()], vec![e[2].clone(), e[3].clone()]]).unwrap();
        let ev = |coeffs: &[C64], z: &[C64]| HomPoly::from_univariate(coeffs).eval_homogeneous(z);
        for _ in 0..20 {
            let z = complex_gaussians(&mut rng, 2);
            let want = ev(&e[0], &z) * ev(&e[3], &z) - ev(&e[1], &z) * ev(&e[2], &z);
            let got = ev(&det, &z);
            assert!((got - want).norm() < 1e-10 * (1.0 + want.norm()));
        }
    }

    fn roots_of_unity_measure(p: u32) -> EmpiricalMeasure {
        let mut coeffs = vec![ZERO; p as usize + 1];
        coeffs[0] = c(-1.0, 0.0);
        coeffs[p as usize] = c(1.0, 0.0);
        let set = roots_on_cp1(&coeffs).unwrap();
        EmpiricalMeasure {
            points: set.roots,
            normalizer: p as f64,
            p,
            r: 1,
            seed: 0,
            index: 0,
            redraws: 0,
            max_residual: set.max_residual,
            warnings: Vec::new(),
        }
    }

    #[test]
    fn constant_pairing_is_mass() {
        for p in [3, 7, 49] {
            assert_eq!(pair_measure(&roots_of_unity_measure(p), |_| 1.0), 1.0);
        }
    }

    #[test]
    fn fs_weight_on_unit_circle_is_half() {
        let mu = roots_of_unity_measure(4);
        let v = pair_measure(&mu, |x| {
            let h = x.homogeneous();
            h[0].norm_sqr() / (h[0].norm_sqr() + h[1].norm_sqr())
        });
        assert!((v - 0.5).abs() < 1e-14);
    }

    #[test]
    fn test_function_integrals() {
        let rule1 = QuadratureRule::default_for(ModelSpace::cp1());
        let rule2 = QuadratureRule::default_for(ModelSpace::cp2());
        // On CP^1 the pushforward of ω to t_0 is Lebesgue on [0, 1]; on CP^2
        // the pushforward of ω² is twice Lebesgue on the simplex.
        let e4 = (-4.0_f64).exp();
        let radial1 = (1.0 - e4) / 4.0;
        let radial2 = 2.0 * (1.0 - 5.0 * e4) / 16.0;
        let kink1 = 2.0 * 0.5_f64.powi(4) / 4.0;
        assert!((fs_integral(TestFunction::RadialBump, &rule1).unwrap() - radial1).abs() < 1e-12);
        assert!((fs_integral(TestFunction::RadialBump, &rule2).unwrap() - radial2).abs() < 1e-12);
        assert!((fs_integral(TestFunction::CubicKink, &rule1).unwrap() - kink1).abs() < 1e-6);
        assert!(fs_integral(TestFunction::ReBump, &rule1).unwrap().abs() < 1e-14);
        let one = pair_invariant_top_form(TestFunction::One, &|x| fs_form(x).power(2), &rule2).unwrap();
        assert!((one - 1.0).abs() < 1e-12);
    }

    #[test]
    fn test_function_jets_are_chart_independent() {
        let x = ChartPoint::new(0, vec![c(0.4, -0.3), c(-0.2, 0.9)]).unwrap();
        let y = x.to_chart(2).unwrap();
        for f in TestFunction::BATTERY {
            assert!((f.value(&x) - f.value(&y)).abs() < 1e-14);
            assert!((f.jet(&x).value - f.eval_homogeneous(&x.homogeneous())).norm() < 1e-14);
        }
    }

    #[test]
    fn constant_norm_is_one() {
        let rule = QuadratureRule::new(ModelSpace::cp1(), 8, 4).unwrap();
        assert_eq!(TestFunction::One.c2_norm(&rule).unwrap(), 1.0);
        assert!(TestFunction::RadialBump.c2_norm(&rule).unwrap() > 1.0);
    }

    #[test]
    fn zero_measures_have_bezout_mass() {
        let space = build_default(&BundleSpec::new(ModelSpace::cp2(), 3, vec![0, 1])).unwrap();
        let mu = sample_zero_measure(&space, MeasureKind::Gaussian, 5, "zeros", 0).unwrap();
        assert_eq!(mu.points.len(), 12);
        assert!(mu.warnings.is_empty());
        assert_eq!(pair_measure(&mu, |_| 1.0), 12.0 / 9.0);
    }

    #[test]
    fn unsupported_regimes_list_the_supported_ones() {
        let spec = BundleSpec::new(ModelSpace::cp1(), 4, vec![0, 0]).allow_high_rank();
        match expectation_experiment(&spec, 1, 10, &[TestFunction::One], MeasureKind::Gaussian, 0) {
            Err(LabError::Unsupported { supported, .. }) => assert_eq!(supported, SUPPORTED_REGIMES),
            other => panic!("expected unsupported, got {other:?}"),
        }
        let spec3 = BundleSpec::new(ModelSpace::cp2(), 4, vec![0, 0, 0]).allow_high_rank();
        assert!(regime(&spec3, 3).is_err());
    }
}
