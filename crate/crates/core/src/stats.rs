//! Deterministic reductions, Monte Carlo summaries and rate fits.

use crate::error::{LabError, Result};
use crate::jet::C64;

/// Pairwise summation with a fixed split, independent of thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn pairwise_sum_c(xs: &[C64]) -> C64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum_c(&xs[..mid]) + pairwise_sum_c(&xs[mid..])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`.
    pub se: f64,
    pub n: usize,
}

pub fn mean_se(xs: &[f64]) -> MeanSe {
    let n = xs.len();
    let mean = pairwise_sum(xs) / n as f64;
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    let var = if n > 1 {
        pairwise_sum(&dev) / (n - 1) as f64
    } else {
        0.0
    };
    MeanSe {
        mean,
        se: (var / n as f64).sqrt(),
        n,
    }
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(LabError::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(LabError::Rejected("slope fit needs at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Slope of `log residual` against `log p` over a grid of at least four
/// points, dropping the smallest `p`.
pub fn rate_slope(ps: &[usize], residuals: &[f64]) -> Result<f64> {
    if ps.len() < 4 {
        return Err(LabError::Rejected(format!(
            "rate fit needs a grid of at least 4 points, got {}",
            ps.len()
        )));
    }
    if residuals.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(LabError::Evaluation("log of a non-positive residual".into()));
    }
    let mut idx: Vec<usize> = (0..ps.len()).collect();
    idx.sort_by_key(|&i| ps[i]);
    let xs: Vec<f64> = idx[1..].iter().map(|&i| (ps[i] as f64).ln()).collect();
    let ys: Vec<f64> = idx[1..].iter().map(|&i| residuals[i].ln()).collect();
    ols_slope(&xs, &ys)
}

/// Maximum of nonnegative values where any NaN makes the result infinite.
pub fn sup<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values
        .into_iter()
        .fold(0.0, |acc, v| if v.is_nan() { f64::INFINITY } else { acc.max(v) })
}
