//! The experiments behind `kodlab run`. Each produces long-format rows, one
//! per `(p, test function, statistic)`, plus a few summary metrics.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use kodlab_core::bergman::{
    bergman_diagonal, bergman_expansion_check, build_default, curvature_transfer_residual,
    pointwise_bound, rule_for_degree, tian_residual, trace_integral,
};
use kodlab_core::chern::{chern_reality_defect, intermediate_degree, tensor_chern_identity_residual, MatrixOfForms};
use kodlab_core::grassmann::{
    chern_form_dual_universal, curvature_dual_universal, curvature_universal, line_integral_c1_dual,
    GrassChartPoint,
};
use kodlab_core::model::{sample_fs_point, ChartPoint, ModelSpace};
use kodlab_core::quadrature::QuadratureRule;
use kodlab_core::rng::{complex_gaussians, stream};
use kodlab_core::sections::{covariance_experiment, exponents, BundleSpec, Twist};
use kodlab_core::stats::sup;
use kodlab_core::zeros::{
    compare_estimates, equidistribution_experiment, expectation_experiment, sigma_deviation, twist_shift,
    ExpectationEstimate, MeasureKind,
};
use kodlab_core::{LabError, Result, C64};
use nalgebra::DMatrix;

use crate::config::{ExperimentConfig, ExperimentKind};

/// The column value for rows that do not belong to a test function.
pub const NO_FUNCTION: &str = "-";

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub p: Option<u32>,
    pub function: String,
    pub statistic: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub experiment: String,
    pub config_digest: String,
    pub params: BTreeMap<String, String>,
    pub metrics: BTreeMap<String, f64>,
    pub rows: Vec<Row>,
}

impl ResultRecord {
    fn push(&mut self, p: Option<u32>, function: &str, statistic: impl Into<String>, value: f64) {
        self.rows.push(Row {
            p,
            function: function.to_string(),
            statistic: statistic.into(),
            value,
        });
    }

    fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }
}

/// The default p-grid of each model for rate fits.
pub fn default_grid(space: ModelSpace) -> Vec<u32> {
    if space.n() == 1 {
        vec![8, 16, 32, 64, 128]
    } else {
        vec![5, 8, 12, 17, 25]
    }
}

/// The chart center followed by `count` Fubini–Study random points, the
/// discretization of sup norms.
pub fn sup_points(space: ModelSpace, count: usize, seed: u64) -> Vec<ChartPoint> {
    let mut pts = vec![ChartPoint::origin(space.n())];
    pts.extend((0..count as u64).map(|i| sample_fs_point(space, &mut stream(seed, "sup-points", i))));
    pts
}

pub fn run(config: &ExperimentConfig) -> Result<ResultRecord> {
    let mut rec = ResultRecord {
        experiment: config.experiment.name().to_string(),
        config_digest: config.digest(),
        params: config.params(),
        metrics: BTreeMap::new(),
        rows: Vec::new(),
    };
    match config.experiment {
        ExperimentKind::Tian => tian(config, &mut rec)?,
        ExperimentKind::Bergman => bergman(config, &mut rec)?,
        ExperimentKind::Equidistribution => equidistribution(config, &mut rec)?,
        ExperimentKind::Expectation => expectation(config, &mut rec)?,
        ExperimentKind::Covariance => covariance(config, &mut rec)?,
        ExperimentKind::GrassmannCheck => grassmann_check(config, &mut rec)?,
        ExperimentKind::Degrees => degrees(config, &mut rec)?,
        ExperimentKind::Identities => identities(config, &mut rec)?,
    }
    Ok(rec)
}

fn usize_grid(config: &ExperimentConfig) -> Vec<usize> {
    config
        .grid
        .clone()
        .unwrap_or_else(|| default_grid(config.spec.space))
        .into_iter()
        .map(|p| p as usize)
        .collect()
}

fn tian(config: &ExperimentConfig, rec: &mut ResultRecord) -> Result<()> {
    let k = config.k.unwrap_or(1);
    let grid = usize_grid(config);
    let pts = sup_points(config.spec.space, config.points, config.seed);
    let t = tian_residual(k, &config.spec, &grid, &pts)?;
    let b = pointwise_bound(k, &config.spec, &grid, &pts)?;
    for (i, &p) in grid.iter().enumerate() {
        let p = Some(p as u32);
        rec.push(p, NO_FUNCTION, "residual1", t.residual1[i]);
        if let Some(r2) = &t.residual2 {
            rec.push(p, NO_FUNCTION, "residual2", r2[i]);
        }
        rec.push(p, NO_FUNCTION, "pointwise_bound", b.residuals[i]);
    }
    rec.push(None, NO_FUNCTION, "slope1", t.slope1);
    rec.metric("slope1", t.slope1);
    if let Some(s2) = t.slope2 {
        rec.push(None, NO_FUNCTION, "slope2", s2);
        rec.metric("slope2", s2);
    }
    rec.push(None, NO_FUNCTION, "bound_exponent", b.exponent);
    rec.metric("bound_exponent", b.exponent);
    rec.metric("prequantum", if config.spec.is_prequantum() { 1.0 } else { 0.0 });
    Ok(())
}

fn bergman(config: &ExperimentConfig, rec: &mut ResultRecord) -> Result<()> {
    let grid = usize_grid(config);
    let pts = sup_points(config.spec.space, config.points, config.seed);
    let (mut worst_trace, mut worst_spread) = (0.0_f64, 0.0_f64);
    for &p in &grid {
        let spec = config.spec.with_p(p as u32);
        let space = build_default(&spec)?;
        let q = spec.p + spec.degrees.iter().copied().max().unwrap_or(0);
        let trace = trace_integral(&space, &rule_for_degree(spec.space, q))?;
        let dim = space.dim() as f64;
        let traces: Vec<f64> = pts
            .iter()
            .map(|x| Ok(bergman_diagonal(&space, x)?.endomorphism.value.trace().re))
            .collect::<Result<_>>()?;
        let (lo, hi) = traces.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let spread = (hi - lo) / hi.abs();
        let rel = (trace - dim).abs() / dim;
        worst_trace = worst_trace.max(rel);
        worst_spread = worst_spread.max(spread);
        let p = Some(p as u32);
        rec.push(p, NO_FUNCTION, "dim", dim);
        rec.push(p, NO_FUNCTION, "trace_integral", trace);
        rec.push(p, NO_FUNCTION, "trace_relative_error", rel);
        rec.push(p, NO_FUNCTION, "kernel_trace_min", lo);
        rec.push(p, NO_FUNCTION, "kernel_trace_max", hi);
    }
    if grid.len() >= 3 {
        let e = bergman_expansion_check(&config.spec, &grid, &pts)?;
        for (p, r) in grid.iter().zip(&e.residuals) {
            rec.push(Some(*p as u32), NO_FUNCTION, "expansion_residual", *r);
        }
        rec.metric("expansion_exponent", e.exponent);
    }
    rec.metric("max_trace_relative_error", worst_trace);
    rec.metric("max_kernel_trace_spread", worst_spread);
    Ok(())
}

fn equidistribution(config: &ExperimentConfig, rec: &mut ResultRecord) -> Result<()> {
    let n = config.spec.space.n();
    let grid = config.grid.clone().unwrap_or_else(|| {
        if n == 1 {
            vec![8, 16, 32, 64, 128, 256]
        } else {
            vec![2, 4, 6, 8, 10, 12]
        }
    });
    let samples = config.samples.unwrap_or(if n == 1 { 100 } else { 50 });
    let rep = equidistribution_experiment(&config.spec, &grid, samples, &config.battery, config.seed)?;
    for (j, f) in rep.battery.iter().enumerate() {
        rec.push(None, f.name(), "c2_norm", rep.norms[j]);
        rec.push(None, f.name(), "target", rep.targets[j]);
    }
    for row in &rep.rows {
        let p = Some(row.p);
        for (j, f) in rep.battery.iter().enumerate() {
            rec.push(p, f.name(), "single_error", row.single[j]);
            rec.push(p, f.name(), "mean_error", row.mean[j]);
            rec.push(p, f.name(), "mean_error_se", row.mean_se[j]);
            rec.push(p, f.name(), "ratio", row.ratio[j]);
            rec.push(p, f.name(), "fitted_constant", row.fitted[j]);
            rec.push(p, f.name(), "tail_fraction", row.tail_fraction[j]);
        }
        rec.push(p, NO_FUNCTION, "expected_count", row.expected_count as f64);
        rec.push(p, NO_FUNCTION, "count_mismatches", row.count_mismatches as f64);
        rec.push(p, NO_FUNCTION, "redraws", row.redraws as f64);
        rec.push(p, NO_FUNCTION, "warnings", row.warnings as f64);
        rec.push(p, NO_FUNCTION, "max_residual", row.max_residual);
    }
    let last = rep.rows.len() - 1;
    for (j, f) in rep.battery.iter().enumerate() {
        let c = rep.rows[last].fitted[j];
        rec.metric(format!("fitted_constant/{}", f.name()), c);
        if last >= 1 {
            let prev = rep.rows[last - 1].fitted[j];
            let drift = if prev > 0.0 { (c - prev).abs() / prev } else { 0.0 };
            rec.metric(format!("constant_drift/{}", f.name()), drift);
        }
    }
    rec.metric("count_mismatches", rep.rows.iter().map(|r| r.count_mismatches as f64).sum());
    rec.metric("redraws", rep.rows.iter().map(|r| r.redraws as f64).sum());
    Ok(())
}

fn push_estimates(rec: &mut ResultRecord, est: &[ExpectationEstimate], tag: &str) {
    for e in est {
        let p = Some(e.p);
        let name = e.function.name();
        rec.push(p, name, format!("{tag}mean"), e.mean);
        rec.push(p, name, format!("{tag}se"), e.se);
        rec.push(p, name, format!("{tag}prediction"), e.prediction);
        if let Some(t) = e.two_term {
            rec.push(p, name, format!("{tag}two_term"), t);
        }
        rec.push(p, name, format!("{tag}deviation"), e.deviation());
    }
    if let Some(e) = est.first() {
        let p = Some(e.p);
        rec.push(p, NO_FUNCTION, format!("{tag}expected_count"), e.expected_count as f64);
        rec.push(p, NO_FUNCTION, format!("{tag}count_mismatches"), e.count_mismatches as f64);
        rec.push(p, NO_FUNCTION, format!("{tag}redraws"), e.redraws as f64);
        rec.push(p, NO_FUNCTION, format!("{tag}warnings"), e.warnings as f64);
    }
}

fn max_deviation(est: &[ExpectationEstimate]) -> f64 {
    sup(est.iter().map(|e| e.deviation()))
}

fn expectation(config: &ExperimentConfig, rec: &mut ResultRecord) -> Result<()> {
    let spec = &config.spec;
    let k = config.k.unwrap_or(spec.rank());
    let samples = config.samples.unwrap_or(2000);
    let est = expectation_experiment(spec, k, samples, &config.battery, config.kind, config.seed)?;
    push_estimates(rec, &est, "");
    rec.metric("max_deviation", max_deviation(&est));
    if config.compare_kinds {
        let other_kind = match config.kind {
            MeasureKind::Gaussian => MeasureKind::FubiniStudy,
            MeasureKind::FubiniStudy => MeasureKind::Gaussian,
        };
        let other = expectation_experiment(spec, k, samples, &config.battery, other_kind, config.seed)?;
        push_estimates(rec, &other, &format!("{}/", other_kind.name()));
        let comps = compare_estimates(&est, &other)?;
        for c in &comps {
            rec.push(Some(spec.p), c.function.name(), "kind_difference", c.difference);
            rec.push(Some(spec.p), c.function.name(), "kind_combined_se", c.combined_se);
            rec.push(Some(spec.p), c.function.name(), "kind_deviation", c.deviation());
        }
        rec.metric("max_kind_deviation", sup(comps.iter().map(|c| c.deviation())));
    }
    if config.shift_baseline {
        if matches!(spec.twist, Twist::None) {
            return Err(LabError::Rejected("shift_baseline needs a twisted metric on E".into()));
        }
        let plain = spec.clone().with_twist(Twist::None);
        // An independent seed keeps the two estimates uncorrelated.
        let base = expectation_experiment(&plain, k, samples, &config.battery, config.kind, config.seed.wrapping_add(1))?;
        push_estimates(rec, &base, "baseline/");
        let shifts = twist_shift(&est, &base)?;
        for s in &shifts {
            let name = s.comparison.function.name();
            rec.push(Some(spec.p), name, "shift", s.comparison.difference);
            rec.push(Some(spec.p), name, "shift_se", s.comparison.combined_se);
            rec.push(Some(spec.p), name, "shift_predicted_subleading", s.predicted_subleading);
            rec.push(Some(spec.p), name, "shift_predicted_exact", s.predicted_exact);
            rec.push(Some(spec.p), name, "shift_deviation", s.deviation());
        }
        rec.metric("max_shift_deviation", sup(shifts.iter().map(|s| s.deviation())));
    }
    Ok(())
}

fn covariance(config: &ExperimentConfig, rec: &mut ResultRecord) -> Result<()> {
    let Twist::Constant(a) = &config.spec.twist else {
        return Err(LabError::Rejected("covariance needs a constant twist (e.constant)".into()));
    };
    let samples = config.samples.unwrap_or(10_000);
    let space = build_default(&config.spec)?;
    let rep = covariance_experiment(&space, samples, config.seed, "covariance")?;
    let p = Some(config.spec.p);
    let r = space.rank();
    let mut worst = 0.0_f64;
    for j in 0..r {
        for l in 0..r {
            let expect = a[(j, l)] * rep.n_p as f64;
            let e = rep.estimate[(j, l)];
            let dev = sigma_deviation(e.re - expect.re, rep.se_re[(j, l)])
                .max(sigma_deviation(e.im - expect.im, rep.se_im[(j, l)]));
            worst = worst.max(dev);
            let tag = format!("[{j},{l}]");
            rec.push(p, NO_FUNCTION, format!("estimate_re{tag}"), e.re);
            rec.push(p, NO_FUNCTION, format!("estimate_im{tag}"), e.im);
            rec.push(p, NO_FUNCTION, format!("se_re{tag}"), rep.se_re[(j, l)]);
            rec.push(p, NO_FUNCTION, format!("se_im{tag}"), rep.se_im[(j, l)]);
            rec.push(p, NO_FUNCTION, format!("expected_re{tag}"), expect.re);
            rec.push(p, NO_FUNCTION, format!("expected_im{tag}"), expect.im);
            rec.push(p, NO_FUNCTION, format!("deviation{tag}"), dev);
        }
    }
    let mut worst_marginal = 0.0_f64;
    for m in &rep.marginals {
        let tag = format!("[{}]", m.component);
        let dm = sigma_deviation(m.mean - m.expected_mean, m.mean_se);
        let dv = sigma_deviation(m.variance - m.expected_variance, m.variance_se);
        worst_marginal = worst_marginal.max(dm).max(dv);
        rec.push(p, NO_FUNCTION, format!("marginal_mean{tag}"), m.mean);
        rec.push(p, NO_FUNCTION, format!("marginal_mean_se{tag}"), m.mean_se);
        rec.push(p, NO_FUNCTION, format!("marginal_expected_mean{tag}"), m.expected_mean);
        rec.push(p, NO_FUNCTION, format!("marginal_variance{tag}"), m.variance);
        rec.push(p, NO_FUNCTION, format!("marginal_variance_se{tag}"), m.variance_se);
        rec.push(p, NO_FUNCTION, format!("marginal_expected_variance{tag}"), m.expected_variance);
    }
    rec.metric("n_p", rep.n_p as f64);
    rec.metric("max_entry_deviation", worst);
    rec.metric("max_marginal_deviation", worst_marginal);
    Ok(())
}

/// The Grassmannians checked by `grassmann-check`.
pub const GRASSMANN_SHAPES: [(usize, usize); 4] = [(1, 3), (2, 4), (2, 5), (3, 6)];

/// Largest coefficient gap between the dual curvature at the chart center
/// and the coordinate pairing `i dz_{jl} ∧ dz̄_{kl} / 2π` in entry `(k, j)`.
pub fn chart_center_gap(r: usize, m: usize) -> Result<f64> {
    let x = GrassChartPoint::base(r, m)?;
    let curv = curvature_dual_universal(&x)?;
    let dim = x.dim();
    let mut expect = MatrixOfForms::zero(r, dim);
    for j in 0..r {
        for k in 0..r {
            for l in 0..m - r {
                let (a, b) = (x.coordinate_index(j, l), x.coordinate_index(k, l));
                expect.coeffs[a * dim + b][(k, j)] += C64::new(1.0 / (2.0 * PI), 0.0);
            }
        }
    }
    Ok(curv
        .coeffs
        .iter()
        .zip(&expect.coeffs)
        .map(|(u, v)| (u - v).norm())
        .fold(0.0, f64::max))
}

/// `(sup relative gap of R^{T*} + (R^T)ᵀ, inf eigenvalue of c_1(T*))` over
/// `count` random chart points.
pub fn grassmann_random_checks(r: usize, m: usize, count: usize, seed: u64) -> Result<(f64, f64)> {
    let (mut gap, mut min_eig) = (0.0_f64, f64::INFINITY);
    for i in 0..count as u64 {
        let mut rng = stream(seed, &format!("grassmann/G({r},{m})"), i);
        let z = DMatrix::from_vec(r, m - r, complex_gaussians(&mut rng, r * (m - r)));
        let x = GrassChartPoint::new(r, m, z)?;
        let dual = curvature_dual_universal(&x)?;
        let plain = curvature_universal(&x)?;
        for (u, v) in dual.coeffs.iter().zip(&plain.coeffs) {
            gap = gap.max((u + v.transpose()).norm() / (1.0 + v.norm()));
        }
        let g = chern_form_dual_universal(1, &x)?.matrix();
        let herm = (&g + g.adjoint()) * C64::new(0.5, 0.0);
        min_eig = min_eig.min(herm.symmetric_eigenvalues().min());
    }
    Ok((gap, min_eig))
}

fn grassmann_check(config: &ExperimentConfig, rec: &mut ResultRecord) -> Result<()> {
    let (mut center, mut transpose, mut eig) = (0.0_f64, 0.0_f64, f64::INFINITY);
    for (r, m) in GRASSMANN_SHAPES {
        let name = format!("G({r},{m})");
        let c = chart_center_gap(r, m)?;
        let (t, e) = grassmann_random_checks(r, m, config.points, config.seed)?;
        rec.push(None, &name, "chart_center_gap", c);
        rec.push(None, &name, "dual_transpose_gap", t);
        rec.push(None, &name, "min_c1_eigenvalue", e);
        center = center.max(c);
        transpose = transpose.max(t);
        eig = eig.min(e);
    }
    let rule = QuadratureRule::default_for(ModelSpace::cp1());
    let mut line = 0.0_f64;
    for m in 2..=5 {
        let v = line_integral_c1_dual(m, &rule)?;
        rec.push(None, &format!("G(1,{m})"), "line_integral_c1", v);
        line = line.max((v - 1.0).abs());
    }
    rec.metric("max_chart_center_gap", center);
    rec.metric("max_dual_transpose_gap", transpose);
    rec.metric("min_c1_eigenvalue", eig);
    rec.metric("max_line_integral_error", line);
    Ok(())
}

/// `N` with `N + 1 = dim H⁰(X, E)`.
pub fn section_count_minus_one(spec: &BundleSpec) -> usize {
    spec.degrees.iter().map(|&d| exponents(spec.space.n(), d).len()).sum::<usize>() - 1
}

/// `λ_k` for every admissible `k`, in increasing order.
pub fn intermediate_degrees(spec: &BundleSpec) -> Result<Vec<(usize, f64)>> {
    let big_n = section_count_minus_one(spec);
    let r = spec.rank();
    let n = spec.space.n();
    let rule = QuadratureRule::default_for(spec.space);
    // c_j(E) ∧ ω^{n−j} needs j ≤ n.
    let lo = big_n.saturating_sub(r);
    let hi = big_n.min((big_n + n).saturating_sub(r));
    (lo..=hi)
        .map(|k| Ok((k, intermediate_degree(k, big_n, &|x| Ok(spec.e_metric(x)), r, &rule)?)))
        .collect()
}

fn degrees(config: &ExperimentConfig, rec: &mut ResultRecord) -> Result<()> {
    let big_n = section_count_minus_one(&config.spec);
    rec.metric("N", big_n as f64);
    for (k, v) in intermediate_degrees(&config.spec)? {
        rec.push(None, NO_FUNCTION, format!("lambda[{k}]"), v);
        rec.metric(format!("lambda[{k}]"), v);
    }
    Ok(())
}

fn identities(config: &ExperimentConfig, rec: &mut ResultRecord) -> Result<()> {
    let spec = &config.spec;
    let pts = sup_points(spec.space, config.points, config.seed);
    let space = build_default(spec)?;
    let transfer = pts
        .iter()
        .map(|x| curvature_transfer_residual(&space, x))
        .collect::<Result<Vec<_>>>()?;
    let transfer = sup(transfer);
    rec.push(Some(spec.p), NO_FUNCTION, "curvature_transfer_residual", transfer);
    let max_p = config.grid.as_ref().and_then(|g| g.iter().max().copied()).unwrap_or(10);
    let mut tensor = 0.0_f64;
    for p in 1..=max_p {
        for k in 0..=spec.rank() {
            let res = tensor_chern_identity_residual(p, k, &|x| spec.line_weight(x), &|x| Ok(spec.e_metric(x)), &pts)?;
            rec.push(Some(p), NO_FUNCTION, format!("tensor_identity_residual[k={k}]"), res);
            tensor = tensor.max(res);
        }
    }
    let mut reality = 0.0_f64;
    for x in &pts {
        let h = spec.full_metric(x)?;
        for k in 1..=spec.rank().min(spec.space.n()) {
            reality = reality.max(chern_reality_defect(k, &h)?);
        }
    }
    rec.push(Some(spec.p), NO_FUNCTION, "chern_reality_defect", reality);
    rec.metric("curvature_transfer_residual", transfer);
    rec.metric("tensor_identity_residual", tensor);
    rec.metric("chern_reality_defect", reality);
    Ok(())
}
