//! The model spaces CP^1 and CP^2 with the Fubini–Study structure.
//!
//! `ω = (i/2π) ∂∂̄ log(1 + ‖z‖²)` in every affine chart, so `∫ ω^n = 1` and the
//! volume form `ω^n / n!` has total mass `1 / n!`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{LabError, Result};
use crate::forms::FormAtPoint;
use crate::jet::{JetScalar, MixedJet2, C64, ONE, ZERO};
use crate::rng::complex_gaussian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelSpace {
    n: usize,
}

impl ModelSpace {
    pub fn new(n: usize) -> Result<Self> {
        if n == 1 || n == 2 {
            Ok(Self { n })
        } else {
            Err(LabError::Unsupported {
                requested: format!("CP^{n}"),
                supported: "CP^1, CP^2".into(),
            })
        }
    }

    pub fn cp1() -> Self {
        Self { n: 1 }
    }

    pub fn cp2() -> Self {
        Self { n: 2 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn chart_count(&self) -> usize {
        self.n + 1
    }

    /// `∫ ω^n / n! = 1 / n!`.
    pub fn volume(&self) -> f64 {
        if self.n == 1 {
            1.0
        } else {
            0.5
        }
    }
}

/// A point in the affine chart `{Z_chart ≠ 0}`; `z` lists the other
/// homogeneous coordinates divided by `Z_chart`, in increasing index order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    pub chart: usize,
    pub z: Vec<C64>,
}

impl ChartPoint {
    pub fn new(chart: usize, z: Vec<C64>) -> Result<Self> {
        if chart > z.len() {
            return Err(LabError::Rejected(format!(
                "chart {chart} out of range for dimension {}",
                z.len()
            )));
        }
        if z.iter().any(|w| !w.is_finite()) {
            return Err(LabError::Rejected("non-finite chart coordinate".into()));
        }
        Ok(Self { chart, z })
    }

    pub fn origin(n: usize) -> Self {
        Self {
            chart: 0,
            z: vec![ZERO; n],
        }
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    /// Homogeneous index of chart coordinate `a`.
    pub fn homogeneous_index(&self, a: usize) -> usize {
        if a < self.chart {
            a
        } else {
            a + 1
        }
    }

    /// Representative with `Z_chart = 1`.
    pub fn homogeneous(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.n() + 1);
        for k in 0..=self.n() {
            if k == self.chart {
                out.push(ONE);
            } else {
                out.push(self.z[if k < self.chart { k } else { k - 1 }]);
            }
        }
        out
    }

    pub fn from_homogeneous(coords: &[C64], chart: usize) -> Result<Self> {
        let pivot = coords[chart];
        if pivot.norm() == 0.0 {
            return Err(LabError::Rejected(format!(
                "point not representable in chart {chart}"
            )));
        }
        let z = coords
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != chart)
            .map(|(_, w)| w / pivot)
            .collect();
        Self::new(chart, z)
    }

    /// Chart of the largest-modulus homogeneous coordinate.
    pub fn best_from_homogeneous(coords: &[C64]) -> Result<Self> {
        let chart = coords
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .map(|(k, _)| k)
            .ok_or_else(|| LabError::Rejected("empty coordinate vector".into()))?;
        Self::from_homogeneous(coords, chart)
    }

    pub fn to_chart(&self, chart: usize) -> Result<Self> {
        Self::from_homogeneous(&self.homogeneous(), chart)
    }

    pub fn to_best_chart(&self) -> Self {
        Self::best_from_homogeneous(&self.homogeneous()).expect("nonzero representative")
    }

    /// Moment coordinates `t_k = |Z_k|² / ‖Z‖²` in homogeneous order.
    pub fn moment(&self) -> Vec<f64> {
        let h = self.homogeneous();
        let s: f64 = h.iter().map(|w| w.norm_sqr()).sum();
        h.iter().map(|w| w.norm_sqr() / s).collect()
    }

    /// Jets of the moment coordinates with respect to this chart.
    pub fn moment_jets(&self) -> Vec<MixedJet2> {
        let n = self.n();
        let zs = MixedJet2::coordinates(&self.z);
        let abs: Vec<MixedJet2> = zs.iter().map(|z| z.abs_sq()).collect();
        let mut denom = MixedJet2::real(1.0, n);
        for a in &abs {
            denom = denom + a.clone();
        }
        let inv = denom.recip().expect("1 + |z|² is positive");
        (0..=n)
            .map(|k| {
                if k == self.chart {
                    inv.clone()
                } else {
                    let a = if k < self.chart { k } else { k - 1 };
                    &abs[a] * &inv
                }
            })
            .collect()
    }

    /// Jacobian `∂w/∂z` of the transition from this chart to `target`.
    pub fn transition_jacobian(&self, target: usize) -> Result<DMatrix<C64>> {
        let h = self.homogeneous();
        let pivot = h[target];
        if pivot.norm() == 0.0 {
            return Err(LabError::Rejected(format!(
                "point not representable in chart {target}"
            )));
        }
        let n = self.n();
        let target_rows: Vec<usize> = (0..=n).filter(|&k| k != target).collect();
        Ok(DMatrix::from_fn(n, n, |c, a| {
            let k = target_rows[c];
            let j = self.homogeneous_index(a);
            let mut v = ZERO;
            if k == j {
                v += pivot.inv();
            }
            if j == target {
                v -= h[k] / (pivot * pivot);
            }
            v
        }))
    }
}

/// Pull back a `(1,1)`-form given at the same point in another chart:
/// `g_src = Jᵀ g_dst J̄` with `J = ∂w_dst/∂z_src`.
pub fn pull_back_11(form_in_target: &DMatrix<C64>, jacobian: &DMatrix<C64>) -> DMatrix<C64> {
    jacobian.transpose() * form_in_target * jacobian.map(|x| x.conj())
}

/// Jet of `1 + ‖z‖²` in the chart of `x`.
pub fn fs_denominator_jet(x: &ChartPoint) -> MixedJet2 {
    let n = x.n();
    let mut acc = MixedJet2::real(1.0, n);
    for z in MixedJet2::coordinates(&x.z) {
        acc = acc + z.abs_sq();
    }
    acc
}

/// Jet of `1 / (1 + ‖z‖²)`, the squared norm of the standard frame of O(1).
pub fn fs_weight_jet(x: &ChartPoint) -> MixedJet2 {
    fs_denominator_jet(x)
        .recip()
        .expect("1 + |z|² is positive")
}

/// Coefficient matrix of `ω` in the basis `i dz_a ∧ dz̄_b`.
pub fn fs_metric(x: &ChartPoint) -> DMatrix<C64> {
    let s = 1.0 + x.z.iter().map(|w| w.norm_sqr()).sum::<f64>();
    let n = x.n();
    DMatrix::from_fn(n, n, |a, b| {
        let delta = if a == b { 1.0 / s } else { 0.0 };
        (C64::new(delta, 0.0) - x.z[a].conj() * x.z[b] / (s * s)) / (2.0 * PI)
    })
}

pub fn fs_form(x: &ChartPoint) -> FormAtPoint {
    FormAtPoint::from_matrix(&fs_metric(x))
}

/// Density of `ω^n / n!` against `e_top`, i.e. `det g`.
pub fn fs_volume_density(x: &ChartPoint) -> f64 {
    fs_metric(x).determinant().re
}

/// A point distributed by the normalized Fubini–Study volume, returned in
/// the chart of its largest homogeneous coordinate.
pub fn sample_fs_point<R: Rng + ?Sized>(space: ModelSpace, rng: &mut R) -> ChartPoint {
    loop {
        let h: Vec<C64> = (0..=space.n()).map(|_| complex_gaussian(rng)).collect();
        if let Ok(p) = ChartPoint::best_from_homogeneous(&h) {
            return p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd_oracle::fd_jet;
    use crate::rng::stream;

    fn c(x: f64, y: f64) -> C64 {
        C64::new(x, y)
    }

    #[test]
    fn weight_values() {
        let w0 = fs_weight_jet(&ChartPoint::origin(1));
        assert_eq!(w0.value, ONE);
        let log = w0.ln().unwrap();
        assert!((log.mixed[0] + ONE).norm() < 1e-15);
        let w1 = fs_weight_jet(&ChartPoint::new(0, vec![ONE]).unwrap());
        assert!((w1.value - c(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn density_at_one_is_quarter_of_center() {
        let pot = |w: &[C64]| C64::new((1.0 + w[0].norm_sqr()).ln(), 0.0);
        let at = |z: C64| fd_jet(&pot, &[z], 1e-3).mixed[0].re;
        let ratio = at(ONE) / at(ZERO);
        assert!((ratio - 0.25).abs() < 1e-9);
        let g1 = fs_metric(&ChartPoint::new(0, vec![ONE]).unwrap())[(0, 0)].re;
        let g0 = fs_metric(&ChartPoint::origin(1))[(0, 0)].re;
        assert!((g1 / g0 - ratio).abs() < 1e-9);
    }

    #[test]
    fn metric_matches_log_weight_jet() {
        let x = ChartPoint::new(1, vec![c(0.3, -0.2), c(-0.5, 0.4)]).unwrap();
        let pot = fs_denominator_jet(&x).ln().unwrap();
        let g = fs_metric(&x);
        for a in 0..2 {
            for b in 0..2 {
                assert!((pot.mixed_at(a, b) / (2.0 * PI) - g[(a, b)]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn chart_round_trip() {
        let x = ChartPoint::new(0, vec![c(2.0, 1.0), c(-0.5, 0.25)]).unwrap();
        let y = x.to_chart(1).unwrap();
        let back = y.to_chart(0).unwrap();
        for (u, v) in x.z.iter().zip(&back.z) {
            assert!((u - v).norm() < 1e-14);
        }
        assert_eq!(x.to_best_chart().chart, 1);
    }

    #[test]
    fn moment_jets_match_values() {
        let x = ChartPoint::new(2, vec![c(0.7, 0.1), c(-0.2, 1.3)]).unwrap();
        let t = x.moment();
        for (jet, tv) in x.moment_jets().iter().zip(&t) {
            assert!((jet.value.re - tv).abs() < 1e-15);
        }
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fs_median_radius_is_one() {
        let mut rng = stream(11, "fs-median", 0);
        let mut radii: Vec<f64> = (0..100_000)
            .map(|_| {
                let p = sample_fs_point(ModelSpace::cp1(), &mut rng).to_chart(0).unwrap();
                p.z[0].norm()
            })
            .collect();
        radii.sort_by(f64::total_cmp);
        let median = 0.5 * (radii[49_999] + radii[50_000]);
        assert!((median - 1.0).abs() < 0.01, "median {median}");
    }
}
