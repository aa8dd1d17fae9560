//! The universal bundle on `G(r, m)` in the chart `W = span of the rows of
//! [I | Z]` around a base plane `W₀` (`Z = 0`).
//!
//! Chart coordinates are the entries `z_{jl}` of the `r × (m−r)` matrix `Z`,
//! flattened as `a = j·(m−r) + l`.

use nalgebra::DMatrix;

use crate::chern::{curvature_from_metric_frame, invariant_polynomial, MatrixOfForms};
use crate::error::{LabError, Result};
use crate::forms::FormAtPoint;
use crate::jet::{JetScalar, MatrixJet, MixedJet2, C64};
use crate::model::fs_metric;
use crate::quadrature::{try_integrate_invariant, QuadratureRule};

#[derive(Debug, Clone, PartialEq)]
pub struct GrassChartPoint {
    pub r: usize,
    pub m: usize,
    pub z: DMatrix<C64>,
}

impl GrassChartPoint {
    pub fn new(r: usize, m: usize, z: DMatrix<C64>) -> Result<Self> {
        if r == 0 || r > m {
            return Err(LabError::Rejected(format!("invalid Grassmannian G({r},{m})")));
        }
        if z.shape() != (r, m - r) {
            return Err(LabError::DimensionMismatch {
                expected: r * (m - r),
                got: z.len(),
            });
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(LabError::Rejected("non-finite chart coordinate".into()));
        }
        Ok(Self { r, m, z })
    }

    pub fn base(r: usize, m: usize) -> Result<Self> {
        Self::new(r, m, DMatrix::zeros(r, m.saturating_sub(r)))
    }

    pub fn dim(&self) -> usize {
        self.r * (self.m - self.r)
    }

    pub fn coordinate_index(&self, j: usize, l: usize) -> usize {
        j * (self.m - self.r) + l
    }

    fn coordinate_jets(&self) -> Vec<Vec<MixedJet2>> {
        let dim = self.dim();
        (0..self.r)
            .map(|j| {
                (0..self.m - self.r)
                    .map(|l| MixedJet2::coordinate(self.z[(j, l)], self.coordinate_index(j, l), dim))
                    .collect()
            })
            .collect()
    }
}

/// `K = I + Z Z*`, the metric frame of the universal bundle.
pub fn universal_metric(x: &GrassChartPoint) -> MatrixJet {
    let zs = x.coordinate_jets();
    let dim = x.dim();
    let entries: Vec<Vec<MixedJet2>> = (0..x.r)
        .map(|k| {
            (0..x.r)
                .map(|j| {
                    let mut acc = MixedJet2::real(if j == k { 1.0 } else { 0.0 }, dim);
                    for l in 0..x.m - x.r {
                        acc = acc + &zs[k][l] * &JetScalar::conj(&zs[j][l]);
                    }
                    acc
                })
                .collect()
        })
        .collect();
    MatrixJet::from_entries(&entries).expect("square frame")
}

/// `H = (I + Z̄ Zᵀ)⁻¹ = (K⁻¹)ᵀ`, the metric frame of the dual bundle in the
/// dual frame.
pub fn dual_universal_metric(x: &GrassChartPoint) -> Result<MatrixJet> {
    universal_metric(x).transpose().inverse()
}

/// `iR/2π` of the universal bundle.
pub fn curvature_universal(x: &GrassChartPoint) -> Result<MatrixOfForms> {
    curvature_from_metric_frame(&universal_metric(x))
}

/// `iR/2π` of the dual universal bundle.
pub fn curvature_dual_universal(x: &GrassChartPoint) -> Result<MatrixOfForms> {
    curvature_from_metric_frame(&dual_universal_metric(x)?)
}

pub fn chern_form_dual_universal(k: usize, x: &GrassChartPoint) -> Result<FormAtPoint> {
    invariant_polynomial(k, &curvature_dual_universal(x)?)
}

/// `∫ c_1(T*)` over the projective line `{Z = (z, 0, …, 0)}` in `G(1, m)`.
pub fn line_integral_c1_dual(m: usize, rule: &QuadratureRule) -> Result<f64> {
    if m < 2 || rule.space.n() != 1 {
        return Err(LabError::Rejected(
            "line integrals need G(1,m) with m ≥ 2 and a CP^1 rule".into(),
        ));
    }
    let v = try_integrate_invariant(
        |node| {
            let x = node.to_chart(0)?;
            let mut z = DMatrix::zeros(1, m - 1);
            z[(0, 0)] = x.z[0];
            let f = chern_form_dual_universal(1, &GrassChartPoint::new(1, m, z)?)?;
            Ok(f.coeffs[0] / fs_metric(&x)[(0, 0)])
        },
        rule,
    )?;
    Ok(v.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::ONE;
    use crate::model::{fs_weight_jet, ChartPoint, ModelSpace};

    fn c(x: f64, y: f64) -> C64 {
        C64::new(x, y)
    }

    #[test]
    fn base_point_metrics_are_identity() {
        let x = GrassChartPoint::base(2, 4).unwrap();
        assert_eq!(universal_metric(&x).value, DMatrix::identity(2, 2));
        assert_eq!(dual_universal_metric(&x).unwrap().value, DMatrix::identity(2, 2));
    }

    #[test]
    fn projective_line_reduces_to_hyperplane_bundle() {
        let z0 = c(0.6, -1.1);
        let x = GrassChartPoint::new(1, 2, DMatrix::from_element(1, 1, z0)).unwrap();
        let k = universal_metric(&x).entry(0, 0);
        assert!((k.value - c(1.0 + z0.norm_sqr(), 0.0)).norm() < 1e-15);
        let h = dual_universal_metric(&x).unwrap().entry(0, 0);
        let fs = fs_weight_jet(&ChartPoint::new(0, vec![z0]).unwrap());
        assert!((h.value - fs.value).norm() < 1e-15);
        assert!((h.d[0] - fs.d[0]).norm() < 1e-15);
        assert!((h.mixed[0] - fs.mixed[0]).norm() < 1e-15);
        let c1 = chern_form_dual_universal(1, &x).unwrap();
        let omega = fs_metric(&ChartPoint::new(0, vec![z0]).unwrap());
        assert!((c1.coeffs[0] - omega[(0, 0)]).norm() < 1e-15);
    }

    #[test]
    fn dual_frame_inverts_transpose() {
        let z = DMatrix::from_row_slice(2, 2, &[c(0.3, 0.1), c(-0.2, 0.5), c(0.7, -0.4), c(0.05, 0.2)]);
        let x = GrassChartPoint::new(2, 4, z).unwrap();
        let prod = dual_universal_metric(&x).unwrap().value * universal_metric(&x).value.transpose();
        assert!((prod - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn degree_zero_is_one() {
        let x = GrassChartPoint::base(2, 4).unwrap();
        assert_eq!(chern_form_dual_universal(0, &x).unwrap(), FormAtPoint::scalar(ONE, 4));
    }

    #[test]
    fn line_integral_is_one() {
        let rule = QuadratureRule::default_for(ModelSpace::cp1());
        for m in 2..=4 {
            assert!((line_integral_c1_dual(m, &rule).unwrap() - 1.0).abs() < 1e-10);
        }
    }
}
