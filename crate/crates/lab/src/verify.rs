//! The acceptance battery behind `kodlab verify`.
//!
//! Each criterion is a list of checks against pinned tolerances; a
//! criterion passes when every check does and nothing errored.

use std::fmt;
use std::time::Instant;

use kodlab_core::bergman::{
    bergman_diagonal, build_default, curvature_transfer_residual, pullback_chern_form, rule_for_degree,
    trace_integral, fs_norm,
};
use kodlab_core::chern::tensor_chern_identity_residual;
use kodlab_core::grassmann::line_integral_c1_dual;
use kodlab_core::model::{fs_form, sample_fs_point, ChartPoint, ModelSpace};
use kodlab_core::quadrature::QuadratureRule;
use kodlab_core::rng::stream;
use kodlab_core::sections::{covariance_experiment, BundleSpec, TorusFn, Twist};
use kodlab_core::zeros::{
    compare_estimates, equidistribution_experiment, expectation_experiment, sigma_deviation, twist_shift,
    MeasureKind, TestFunction,
};
use kodlab_core::{Result, C64};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::config::{parse, Overrides};
use crate::experiments::{self, chart_center_gap, grassmann_random_checks, intermediate_degrees, sup_points, GRASSMANN_SHAPES};
use crate::output::csv_bytes;

#[allow(dead_code)]
#[path = "../../core/tests/common/mod.rs"]
mod oracle;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Fast,
    Full,
}

impl Suite {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "fast" => Some(Suite::Fast),
            "full" => Some(Suite::Full),
            _ => None,
        }
    }

    /// Fast skips the Monte Carlo heavy criteria and the jet oracle sweep.
    pub fn criteria(&self) -> Vec<u32> {
        match self {
            Suite::Fast => vec![2, 3, 4, 5, 6, 7, 8, 9, 12, 13, 14],
            Suite::Full => (1..=14).collect(),
        }
    }
}

/// Every threshold the battery uses. Defaults are the acceptance values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub jet_relative: f64,
    pub jet_seconds: f64,
    pub gram_diagonal: f64,
    pub gram_off_diagonal: f64,
    pub kernel_relative: f64,
    pub trace_relative: f64,
    pub grassmann_identity: f64,
    pub line_integral: f64,
    pub veronese: f64,
    pub first_order_slope: f64,
    pub second_order_slope: f64,
    pub rate_seconds: f64,
    pub exponent_slack: f64,
    pub transfer: f64,
    pub tensor: f64,
    pub constant_drift: f64,
    pub expectation_sigmas: f64,
    pub expectation_seconds: f64,
    pub covariance_sigmas: f64,
    pub degrees: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            jet_relative: 1e-6,
            jet_seconds: 30.0,
            gram_diagonal: 1e-10,
            gram_off_diagonal: 1e-12,
            kernel_relative: 1e-8,
            trace_relative: 1e-8,
            grassmann_identity: 1e-12,
            line_integral: 1e-8,
            veronese: 1e-8,
            first_order_slope: -0.8,
            second_order_slope: -1.7,
            rate_seconds: 900.0,
            exponent_slack: 0.2,
            transfer: 1e-7,
            tensor: 1e-8,
            constant_drift: 0.25,
            expectation_sigmas: 3.0,
            expectation_seconds: 600.0,
            covariance_sigmas: 4.0,
            degrees: 1e-6,
        }
    }
}

impl Tolerances {
    fn slot(&mut self, key: &str) -> Option<&mut f64> {
        Some(match key {
            "jet_relative" => &mut self.jet_relative,
            "jet_seconds" => &mut self.jet_seconds,
            "gram_diagonal" => &mut self.gram_diagonal,
            "gram_off_diagonal" => &mut self.gram_off_diagonal,
            "kernel_relative" => &mut self.kernel_relative,
            "trace_relative" => &mut self.trace_relative,
            "grassmann_identity" => &mut self.grassmann_identity,
            "line_integral" => &mut self.line_integral,
            "veronese" => &mut self.veronese,
            "first_order_slope" => &mut self.first_order_slope,
            "second_order_slope" => &mut self.second_order_slope,
            "rate_seconds" => &mut self.rate_seconds,
            "exponent_slack" => &mut self.exponent_slack,
            "transfer" => &mut self.transfer,
            "tensor" => &mut self.tensor,
            "constant_drift" => &mut self.constant_drift,
            "expectation_sigmas" => &mut self.expectation_sigmas,
            "expectation_seconds" => &mut self.expectation_seconds,
            "covariance_sigmas" => &mut self.covariance_sigmas,
            "degrees" => &mut self.degrees,
            _ => return None,
        })
    }

    /// Applies a `name=value` override.
    pub fn set(&mut self, assignment: &str) -> std::result::Result<(), String> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| format!("expected name=value, got `{assignment}`"))?;
        let value: f64 = value.trim().parse().map_err(|_| format!("cannot parse `{value}`"))?;
        let slot = self.slot(key.trim()).ok_or_else(|| format!("unknown tolerance `{key}`"))?;
        *slot = value;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    AtMost,
    Below,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    pub observed: f64,
    pub limit: f64,
    pub bound: Bound,
}

impl Check {
    pub fn at_most(label: impl Into<String>, observed: f64, limit: f64) -> Self {
        Check {
            label: label.into(),
            observed,
            limit,
            bound: Bound::AtMost,
        }
    }

    pub fn below(label: impl Into<String>, observed: f64, limit: f64) -> Self {
        Check {
            label: label.into(),
            observed,
            limit,
            bound: Bound::Below,
        }
    }

    /// NaN never passes.
    pub fn passed(&self) -> bool {
        match self.bound {
            Bound::AtMost => self.observed <= self.limit,
            Bound::Below => self.observed < self.limit,
        }
    }

    /// `limit − observed`; positive when the check passes with room.
    pub fn margin(&self) -> f64 {
        self.limit - self.observed
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.bound {
            Bound::AtMost => "<=",
            Bound::Below => "<",
        };
        write!(
            f,
            "{} {}: {:.4e} {op} {:.4e} (margin {:+.3e})",
            if self.passed() { "ok  " } else { "FAIL" },
            self.label,
            self.observed,
            self.limit,
            self.margin()
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionOutcome {
    pub id: u32,
    pub name: &'static str,
    pub checks: Vec<Check>,
    pub error: Option<String>,
    pub seconds: f64,
}

impl CriterionOutcome {
    pub fn passed(&self) -> bool {
        self.error.is_none() && !self.checks.is_empty() && self.checks.iter().all(Check::passed)
    }

    /// The check with the least room, normalized by its limit where that makes sense.
    pub fn tightest(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed()).or_else(|| {
            self.checks.iter().min_by(|a, b| {
                let scale = |c: &Check| c.margin() / c.limit.abs().max(1e-300);
                scale(a).total_cmp(&scale(b))
            })
        })
    }

    /// One summary line per criterion.
    pub fn summary(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let detail = match (&self.error, self.tightest()) {
            (Some(e), _) => format!("error: {e}"),
            (None, Some(c)) => format!("tightest {}: {:.4e} vs {:.4e}", c.label, c.observed, c.limit),
            (None, None) => "no checks ran".into(),
        };
        format!(
            "criterion {:>2} {:<22} {status}  {detail}  [{:.1} s]",
            self.id, self.name, self.seconds
        )
    }
}

pub const NAMES: [&str; 14] = [
    "jet-oracle",
    "gram-closed-form",
    "bergman-constancy",
    "grassmann-identities",
    "veronese-exact",
    "first-order-rates",
    "pointwise-bound",
    "curvature-transfer",
    "tensor-identity",
    "equidistribution",
    "expectation-currents",
    "covariance",
    "intermediate-degrees",
    "determinism",
];

pub fn criterion_name(id: u32) -> Option<&'static str> {
    NAMES.get((id as usize).checked_sub(1)?).copied()
}

/// Runs one criterion; numerical errors are recorded rather than raised.
pub fn run_criterion(id: u32, tol: &Tolerances, seed: u64) -> CriterionOutcome {
    let start = Instant::now();
    let result = match id {
        1 => jet_oracle(tol, seed),
        2 => gram_closed_form(tol),
        3 => bergman_constancy(tol, seed),
        4 => grassmann_identities(tol, seed),
        5 => veronese(tol, seed),
        6 => first_order_rates(tol, seed),
        7 => pointwise_bound_exponents(tol, seed),
        8 => curvature_transfer(tol, seed),
        9 => tensor_identity(tol, seed),
        10 => equidistribution(tol, seed),
        11 => expectation_currents(tol, seed),
        12 => covariance(tol, seed),
        13 => degrees(tol),
        14 => determinism(seed),
        _ => Err(kodlab_core::LabError::Rejected(format!("no criterion {id}"))),
    };
    let (checks, error) = match result {
        Ok(c) => (c, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    CriterionOutcome {
        id,
        name: criterion_name(id).unwrap_or("unknown"),
        checks,
        error,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_suite(ids: &[u32], tol: &Tolerances, seed: u64, mut report: impl FnMut(&CriterionOutcome)) -> Vec<CriterionOutcome> {
    ids.iter()
        .map(|&id| {
            let outcome = run_criterion(id, tol, seed);
            report(&outcome);
            outcome
        })
        .collect()
}

/// Largest value, with NaN winning so that it cannot hide.
fn worst(values: impl IntoIterator<Item = f64>) -> f64 {
    values
        .into_iter()
        .fold(0.0, |acc: f64, v| if v.is_nan() || acc.is_nan() { f64::NAN } else { acc.max(v) })
}

fn fs_points(space: ModelSpace, count: u64, seed: u64, label: &str) -> Vec<ChartPoint> {
    (0..count).map(|i| sample_fs_point(space, &mut stream(seed, label, i))).collect()
}

fn jet_oracle(tol: &Tolerances, seed: u64) -> Result<Vec<Check>> {
    use oracle::expr::{disk_point, relative_gap, Expr};
    use oracle::fd::fd_jet;
    let start = Instant::now();
    let gaps: Vec<f64> = (0..10_000u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, "jet-oracle", i);
            let dim = 1 + (i % 2) as usize;
            let e = Expr::random(&mut rng, dim, 4);
            let z = disk_point(&mut rng, dim);
            relative_gap(&e.jet(&z), &fd_jet(&|w| e.value(w), &z, 1e-3))
        })
        .collect();
    Ok(vec![
        Check::below("worst relative gap over 1e4 expressions", worst(gaps), tol.jet_relative),
        Check::below("seconds", start.elapsed().as_secs_f64(), tol.jet_seconds),
    ])
}

/// `1 / ((p + 1) binom(p, j))`.
fn cp1_gram_entry(p: u32, j: u32) -> f64 {
    let binom = (0..j).fold(1.0, |acc, i| acc * f64::from(p - i) / f64::from(i + 1));
    1.0 / (f64::from(p + 1) * binom)
}

fn gram_closed_form(tol: &Tolerances) -> Result<Vec<Check>> {
    let (mut diag, mut off) = (0.0_f64, 0.0_f64);
    for p in 1..=20 {
        let space = build_default(&BundleSpec::new(ModelSpace::cp1(), p, vec![0]))?;
        let g = space.gram();
        for (a, label) in space.basis.iter().enumerate() {
            for b in 0..space.dim() {
                if a == b {
                    diag = worst([diag, (g[(a, a)] - cp1_gram_entry(p, label.exponent[1])).norm()]);
                } else {
                    off = worst([off, g[(a, b)].norm()]);
                }
            }
        }
    }
    Ok(vec![
        Check::below("diagonal error, p <= 20", diag, tol.gram_diagonal),
        Check::below("off-diagonal size, p <= 20", off, tol.gram_off_diagonal),
    ])
}

fn bergman_constancy(tol: &Tolerances, seed: u64) -> Result<Vec<Check>> {
    let pts = fs_points(ModelSpace::cp1(), 100, seed, "bergman-constancy");
    let mut spread = 0.0_f64;
    for p in 1..=128u32 {
        let space = build_default(&BundleSpec::new(ModelSpace::cp1(), p, vec![0]))?;
        let target = f64::from(p + 1);
        let gaps = pts
            .par_iter()
            .map(|x| Ok((bergman_diagonal(&space, x)?.endomorphism.value[(0, 0)] - target).norm() / target))
            .collect::<Result<Vec<f64>>>()?;
        spread = worst([spread, worst(gaps)]);
    }
    let mut trace = 0.0_f64;
    for p in 1..=25u32 {
        let space = build_default(&BundleSpec::new(ModelSpace::cp2(), p, vec![0]))?;
        let dim = space.dim() as f64;
        let v = trace_integral(&space, &rule_for_degree(ModelSpace::cp2(), p))?;
        trace = worst([trace, (v - dim).abs() / dim]);
    }
    Ok(vec![
        Check::below("CP1 |P_p(x,x) - (p+1)| / (p+1), p <= 128", spread, tol.kernel_relative),
        Check::below("CP2 |int tr P - dim| / dim, p <= 25", trace, tol.trace_relative),
    ])
}

fn grassmann_identities(tol: &Tolerances, seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (r, m) in GRASSMANN_SHAPES {
        checks.push(Check::below(format!("G({r},{m}) chart-center curvature"), chart_center_gap(r, m)?, tol.grassmann_identity));
        let (gap, _) = grassmann_random_checks(r, m, 100, seed)?;
        checks.push(Check::below(format!("G({r},{m}) dual = -transpose"), gap, tol.grassmann_identity));
    }
    let rule = QuadratureRule::default_for(ModelSpace::cp1());
    let line = (2..=5)
        .map(|m| Ok((line_integral_c1_dual(m, &rule)? - 1.0).abs()))
        .collect::<Result<Vec<f64>>>()?;
    checks.push(Check::below("|line integral of c1(T*) - 1|, m <= 5", worst(line), tol.line_integral));
    Ok(checks)
}

fn veronese(tol: &Tolerances, seed: u64) -> Result<Vec<Check>> {
    let pts = sup_points(ModelSpace::cp1(), 50, seed);
    let mut checks = Vec::new();
    for k in 0..=3u32 {
        let mut gap = 0.0_f64;
        for p in 1..=64u32 {
            let space = build_default(&BundleSpec::new(ModelSpace::cp1(), p, vec![k]))?;
            let scale = C64::new(f64::from(p + k), 0.0);
            let gaps = pts
                .par_iter()
                .map(|x| fs_norm(&pullback_chern_form(1, &space, x)?.sub(&fs_form(x).scale(scale)), x))
                .collect::<Result<Vec<f64>>>()?;
            gap = worst([gap, worst(gaps)]);
        }
        checks.push(Check::below(format!("E = O({k}): pullback - (p+{k}) omega, p <= 64"), gap, tol.veronese));
    }
    Ok(checks)
}

/// `O(1) ⊕ O(2)` on CP² with a smooth non-flat conformal metric on each summand.
pub const RATE_CONFIG: &str = "\
experiment = tian
model = cp2
degrees = 1,2
e.conformal = lin(0,0.4,-0.2)|lin(0.3,0,0.4)
grid = 5,8,12,17,25
points = 200
";

fn rate_run(k: usize, seed: u64) -> Result<experiments::ResultRecord> {
    let text = format!("{RATE_CONFIG}k = {k}\n");
    let overrides = Overrides {
        seed: Some(seed),
        ..Overrides::default()
    };
    let config = parse(&text, "rate-config", &overrides)
        .map_err(|e| kodlab_core::LabError::Rejected(e.to_string()))?;
    experiments::run(&config)
}

fn first_order_rates(tol: &Tolerances, seed: u64) -> Result<Vec<Check>> {
    let start = Instant::now();
    let mut checks = Vec::new();
    for k in 1..=2 {
        let rec = rate_run(k, seed)?;
        checks.push(Check::at_most(format!("k={k} first-order slope"), rec.metrics["slope1"], tol.first_order_slope));
        let s2 = rec.metrics.get("slope2").copied().unwrap_or(f64::NAN);
        checks.push(Check::at_most(format!("k={k} second-order slope"), s2, tol.second_order_slope));
    }
    checks.push(Check::below("seconds", start.elapsed().as_secs_f64(), tol.rate_seconds));
    Ok(checks)
}

fn pointwise_bound_exponents(tol: &Tolerances, seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for k in 1..=2 {
        let rec = rate_run(k, seed)?;
        let e = rec.metrics["bound_exponent"];
        let k = k as f64;
        checks.push(Check::at_most(format!("k={k} exponent, general bound"), e, k - 1.0 + tol.exponent_slack));
        checks.push(Check::at_most(format!("k={k} exponent, prequantum bound"), e, k - 2.0 + tol.exponent_slack));
    }
    Ok(checks)
}

fn bump_spec(p: u32) -> BundleSpec {
    BundleSpec::new(ModelSpace::cp2(), p, vec![1, 2]).with_twist(Twist::Conformal(vec![
        TorusFn::Bump {
            center: vec![0.2, 0.5, 0.3],
            width: 0.4,
            amplitude: 0.3,
        },
        TorusFn::Linear(vec![0.0, 0.4, -0.2]),
    ]))
}

fn curvature_transfer(tol: &Tolerances, seed: u64) -> Result<Vec<Check>> {
    let space = build_default(&bump_spec(5))?;
    let res = fs_points(ModelSpace::cp2(), 50, seed, "curvature-transfer")
        .par_iter()
        .map(|x| curvature_transfer_residual(&space, x))
        .collect::<Result<Vec<f64>>>()?;
    Ok(vec![Check::below("CP2 p=5 transfer residual, 50 points", worst(res), tol.transfer)])
}

fn tensor_identity(tol: &Tolerances, seed: u64) -> Result<Vec<Check>> {
    let c = |re, im| C64::new(re, im);
    let base = DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.3, 0.4), c(0.3, -0.4), c(1.0, 0.0)]);
    let chi = TorusFn::Linear(vec![0.1, 0.0, -0.2]);
    let specs = [
        BundleSpec::new(ModelSpace::cp2(), 1, vec![1]).with_line_twist(chi.clone()),
        bump_spec(1).with_line_twist(chi.clone()),
        BundleSpec::new(ModelSpace::cp2(), 1, vec![1, 1])
            .with_twist(Twist::Matrix {
                base,
                direction: DMatrix::identity(2, 2),
                profile: TorusFn::Linear(vec![0.0, 0.5, 0.25]),
            })
            .with_line_twist(chi),
    ];
    let pts = fs_points(ModelSpace::cp2(), 50, seed, "tensor-identity");
    let mut res = 0.0_f64;
    for spec in &specs {
        for p in 1..=10 {
            for k in 0..=spec.rank() {
                let r = tensor_chern_identity_residual(p, k, &|x| spec.line_weight(x), &|x| Ok(spec.e_metric(x)), &pts)?;
                res = worst([res, r]);
            }
        }
    }
    Ok(vec![Check::below("residual, p <= 10, k <= r <= 2", res, tol.tensor)])
}

fn equidistribution(tol: &Tolerances, seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let grid = [8, 16, 32, 64, 128, 256];
    let battery = TestFunction::BATTERY;
    let rep = equidistribution_experiment(&BundleSpec::new(ModelSpace::cp1(), 8, vec![0]), &grid, 100, &battery, seed)?;
    let row = |p: u32| rep.rows.iter().find(|r| r.p == p).expect("grid row");
    let (r16, r64, r128, r256) = (row(16), row(64), row(128), row(256));
    for (j, f) in battery.iter().enumerate() {
        let name = f.name();
        if *f == TestFunction::One {
            // Unit mass is exact, so both errors are rounding only.
            checks.push(Check::at_most(format!("{name}: single error p=16, p=256"), r16.single[j].max(r256.single[j]), 1e-12));
        } else {
            checks.push(Check::below(format!("{name}: single error p=256 / p=16"), r256.single[j] / r16.single[j], 1.0));
        }
        let c = r256.fitted[j];
        let bound = c * 64f64.ln() / 64.0 * rep.norms[j];
        checks.push(Check::at_most(format!("{name}: mean error p=64 vs fitted C log p / p"), r64.mean[j], bound));
        let drift = if r128.fitted[j] > 0.0 { (c - r128.fitted[j]).abs() / r128.fitted[j] } else { 0.0 };
        checks.push(Check::at_most(format!("{name}: fitted C drift p=128 to 256"), drift, tol.constant_drift));
    }
    let grid2: Vec<u32> = (2..=12).collect();
    let spec2 = BundleSpec::new(ModelSpace::cp2(), 2, vec![0, 0]).allow_high_rank();
    let rep2 = equidistribution_experiment(&spec2, &grid2, 50, &[TestFunction::One], seed)?;
    let mismatches: usize = rep2.rows.iter().map(|r| r.count_mismatches).sum();
    checks.push(Check::at_most("CP2 Bezout count mismatches, p <= 12", mismatches as f64, 0.0));
    Ok(checks)
}

fn expectation_currents(tol: &Tolerances, seed: u64) -> Result<Vec<Check>> {
    let start = Instant::now();
    let battery = TestFunction::BATTERY;
    let s = tol.expectation_sigmas;
    let mut checks = Vec::new();
    let flat = BundleSpec::new(ModelSpace::cp1(), 10, vec![0, 0]).allow_high_rank();
    let gauss = expectation_experiment(&flat, 2, 2000, &battery, MeasureKind::Gaussian, seed)?;
    for e in &gauss {
        checks.push(Check::at_most(format!("(a) {} mean vs prediction, sigmas", e.function.name()), e.deviation(), s));
    }
    let fs = expectation_experiment(&flat, 2, 2000, &battery, MeasureKind::FubiniStudy, seed)?;
    for c in compare_estimates(&gauss, &fs)? {
        checks.push(Check::at_most(format!("(c) {} gaussian vs fubini-study, sigmas", c.function.name()), c.deviation(), s));
    }
    let twist = Twist::Conformal(vec![TorusFn::Linear(vec![0.5, 0.0]), TorusFn::Linear(vec![0.5, 0.0])]);
    let plain = flat.with_p(20);
    let twisted = plain.clone().with_twist(twist);
    let a = expectation_experiment(&twisted, 2, 2000, &battery, MeasureKind::Gaussian, seed)?;
    let b = expectation_experiment(&plain, 2, 2000, &battery, MeasureKind::Gaussian, seed.wrapping_add(1))?;
    for sh in twist_shift(&a, &b)? {
        checks.push(Check::at_most(
            format!("(b) {} shift vs curvature term, sigmas", sh.comparison.function.name()),
            sh.deviation(),
            s,
        ));
    }
    checks.push(Check::below("seconds", start.elapsed().as_secs_f64(), tol.expectation_seconds));
    Ok(checks)
}

fn covariance(tol: &Tolerances, seed: u64) -> Result<Vec<Check>> {
    let c = |re| C64::new(re, 0.0);
    let a = DMatrix::from_row_slice(2, 2, &[c(2.0), c(1.0), c(1.0), c(1.0)]);
    let spec = BundleSpec::new(ModelSpace::cp1(), 5, vec![0, 0])
        .allow_high_rank()
        .with_twist(Twist::Constant(a.clone()));
    let rep = covariance_experiment(&build_default(&spec)?, 10_000, seed, "covariance")?;
    let mut checks = Vec::new();
    for j in 0..2 {
        for l in 0..2 {
            let expect = a[(j, l)] * 6.0;
            let e = rep.estimate[(j, l)];
            let dev = worst([
                sigma_deviation(e.re - expect.re, rep.se_re[(j, l)]),
                sigma_deviation(e.im - expect.im, rep.se_im[(j, l)]),
            ]);
            checks.push(Check::at_most(format!("entry ({j},{l}) vs 6A, sigmas"), dev, tol.covariance_sigmas));
        }
    }
    for m in &rep.marginals {
        let j = m.component;
        let dm = sigma_deviation(m.mean - m.expected_mean, m.mean_se);
        let dv = sigma_deviation(m.variance - m.expected_variance, m.variance_se);
        checks.push(Check::at_most(format!("marginal {j} mean, sigmas"), dm, tol.covariance_sigmas));
        checks.push(Check::at_most(format!("marginal {j} variance, sigmas"), dv, tol.covariance_sigmas));
    }
    Ok(checks)
}

fn degrees(tol: &Tolerances) -> Result<Vec<Check>> {
    let spec = BundleSpec::new(ModelSpace::cp2(), 0, vec![1, 1]);
    let lambdas = intermediate_degrees(&spec)?;
    let get = |k| lambdas.iter().find(|(j, _)| *j == k).map_or(f64::NAN, |(_, v)| *v);
    Ok(vec![
        Check::below("|lambda_5 - 1| (c2 slot)", (get(5) - 1.0).abs(), tol.degrees),
        Check::below("|lambda_4 - 2| (c1 omega slot)", (get(4) - 2.0).abs(), tol.degrees),
    ])
}

/// Small configurations covering every parallel code path.
pub const DETERMINISM_CONFIGS: [&str; 5] = [
    "experiment = tian\nmodel = cp2\ndegrees = 1,2\ne.conformal = lin(0,0.4,-0.2)|lin(0.3,0,0.4)\ngrid = 5,8,12,17\npoints = 20\nk = 2\n",
    "experiment = expectation\nmodel = cp1\np = 6\ndegrees = 0,0\nallow_high_rank = true\nk = 2\nsamples = 64\ncompare_kinds = true\n",
    "experiment = equidistribution\nmodel = cp2\ndegrees = 0,0\nallow_high_rank = true\ngrid = 2,3\nsamples = 8\n",
    "experiment = covariance\nmodel = cp1\np = 3\ndegrees = 0,0\nallow_high_rank = true\ne.constant = 2,1;1,1\nsamples = 500\n",
    "experiment = bergman\nmodel = cp2\ndegrees = 1\ngrid = 2,3,4,5\npoints = 20\n",
];

/// CSV bytes of `text` run on a dedicated pool of `workers` threads.
pub fn csv_with_workers(text: &str, seed: u64, workers: usize) -> Result<Vec<u8>> {
    let overrides = Overrides {
        seed: Some(seed),
        ..Overrides::default()
    };
    let config = parse(text, "determinism", &overrides).map_err(|e| kodlab_core::LabError::Rejected(e.to_string()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| kodlab_core::LabError::Evaluation(format!("thread pool: {e}")))?;
    pool.install(|| csv_bytes(&experiments::run(&config)?))
}

fn determinism(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for text in DETERMINISM_CONFIGS {
        let name = text.lines().next().unwrap_or_default().trim_start_matches("experiment = ");
        let reference = csv_with_workers(text, seed, 1)?;
        let mut differing = 0;
        for workers in [2, 4] {
            if csv_with_workers(text, seed, workers)? != reference {
                differing += 1;
            }
        }
        checks.push(Check::at_most(format!("{name}: worker counts with different bytes"), f64::from(differing), 0.0));
    }
    Ok(checks)
}
