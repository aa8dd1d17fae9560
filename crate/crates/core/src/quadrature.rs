//! Fubini–Study volume quadrature in moment-map coordinates.
//!
//! Under `t_k = |Z_k|² / ‖Z‖²` the measure `ω^n / n!` becomes Lebesgue
//! measure on the simplex `{t_1 + … + t_n ≤ 1}` times normalized Haar measure
//! on the angles. The simplex carries a Gauss–Legendre product rule (collapsed
//! onto the triangle for CP^2), the angles a uniform trapezoid rule. Integrands
//! that are polynomial in `t` are integrated exactly once the radial order is
//! large enough.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::jet::C64;
use crate::model::{ChartPoint, ModelSpace};
use crate::stats::{pairwise_sum, pairwise_sum_c};

/// Nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(order: usize) -> Vec<(f64, f64)> {
    let order = NonZeroUsize::new(order.max(1)).expect("positive order");
    let mut out: Vec<(f64, f64)> = GaussLegendre::new(order)
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub space: ModelSpace,
    pub radial: usize,
    pub angular: usize,
    /// Moment coordinates `(t_0, …, t_n)` and weights summing to `1 / n!`.
    simplex: Vec<(Vec<f64>, f64)>,
}

impl QuadratureRule {
    pub fn new(space: ModelSpace, radial: usize, angular: usize) -> Result<Self> {
        if radial == 0 || angular == 0 {
            return Err(LabError::Rejected("quadrature orders must be positive".into()));
        }
        let gl = gauss_legendre_unit(radial);
        let simplex = match space.n() {
            1 => gl.iter().map(|&(t, w)| (vec![1.0 - t, t], w)).collect(),
            _ => {
                let mut nodes = Vec::with_capacity(radial * radial);
                for &(u, wu) in &gl {
                    for &(v, wv) in &gl {
                        let t1 = u;
                        let t2 = (1.0 - u) * v;
                        let t0 = ((1.0 - u) * (1.0 - v)).max(0.0);
                        nodes.push((vec![t0, t1, t2], wu * wv * (1.0 - u)));
                    }
                }
                nodes
            }
        };
        Ok(Self {
            space,
            radial,
            angular,
            simplex,
        })
    }

    pub fn default_for(space: ModelSpace) -> Self {
        match space.n() {
            1 => Self::new(space, 96, 32),
            _ => Self::new(space, 40, 16),
        }
        .expect("valid default orders")
    }

    /// Same rule with both orders doubled.
    pub fn refined(&self) -> Self {
        Self::new(self.space, 2 * self.radial, 2 * self.angular).expect("valid orders")
    }

    pub fn simplex_nodes(&self) -> &[(Vec<f64>, f64)] {
        &self.simplex
    }

    pub fn total_mass(&self) -> f64 {
        pairwise_sum(&self.simplex.iter().map(|x| x.1).collect::<Vec<_>>())
    }

    /// Torus orbits of the product rule: the angle-zero representative, the
    /// orbit weight and the orbit's nodes, all in their best charts.
    pub fn orbits(&self) -> Vec<(ChartPoint, f64, Vec<ChartPoint>)> {
        let n = self.space.n();
        let na = self.angular;
        let angle_sets = na.pow(n as u32);
        self.simplex
            .iter()
            .map(|(t, w)| {
                let orbit = (0..angle_sets)
                    .map(|s| {
                        let mut h = vec![C64::new(t[0].sqrt(), 0.0)];
                        let mut idx = s;
                        for tk in &t[1..] {
                            let theta = 2.0 * PI * (idx % na) as f64 / na as f64;
                            idx /= na;
                            h.push(C64::from_polar(tk.sqrt(), theta));
                        }
                        ChartPoint::best_from_homogeneous(&h).expect("nonzero representative")
                    })
                    .collect::<Vec<_>>();
                (orbit[0].clone(), *w, orbit)
            })
            .collect()
    }

    /// The full product rule, each node expressed in its best chart.
    pub fn nodes(&self) -> Vec<(ChartPoint, f64)> {
        self.orbits()
            .into_iter()
            .flat_map(|(_, w, orbit)| {
                let each = w / orbit.len() as f64;
                orbit.into_iter().map(move |x| (x, each))
            })
            .collect()
    }

    /// One representative node per simplex point (all angles zero).
    pub fn invariant_nodes(&self) -> Vec<(ChartPoint, f64)> {
        self.simplex
            .iter()
            .map(|(t, w)| {
                let h: Vec<C64> = t.iter().map(|x| C64::new(x.sqrt(), 0.0)).collect();
                (
                    ChartPoint::best_from_homogeneous(&h).expect("nonzero representative"),
                    *w,
                )
            })
            .collect()
    }
}

fn checked_sum(values: Vec<C64>, what: &str) -> Result<C64> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(LabError::Evaluation(what.to_string()));
    }
    Ok(pairwise_sum_c(&values))
}

/// `∫ f ω^n/n!` over the full product rule.
pub fn integrate<F>(f: F, rule: &QuadratureRule) -> Result<C64>
where
    F: Fn(&ChartPoint) -> C64 + Sync,
{
    let values: Vec<C64> = rule
        .nodes()
        .par_iter()
        .map(|(x, w)| f(x) * *w)
        .collect();
    checked_sum(values, "integrand at a quadrature node")
}

/// `∫ f ω^n/n!` for a torus-invariant integrand, evaluated once per
/// simplex node.
pub fn integrate_invariant<F>(f: F, rule: &QuadratureRule) -> Result<C64>
where
    F: Fn(&ChartPoint) -> C64 + Sync,
{
    let values: Vec<C64> = rule
        .invariant_nodes()
        .par_iter()
        .map(|(x, w)| f(x) * *w)
        .collect();
    checked_sum(values, "invariant integrand at a quadrature node")
}

/// Fallible variant of [`integrate_invariant`].
pub fn try_integrate_invariant<F>(f: F, rule: &QuadratureRule) -> Result<C64>
where
    F: Fn(&ChartPoint) -> Result<C64> + Sync,
{
    let values: Result<Vec<C64>> = rule
        .invariant_nodes()
        .par_iter()
        .map(|(x, w)| f(x).map(|v| v * *w))
        .collect();
    checked_sum(values?, "invariant integrand at a quadrature node")
}

/// `∫ f dt` over the simplex for a function of the moment coordinates.
pub fn integrate_moment<F>(f: F, rule: &QuadratureRule) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let values: Vec<f64> = rule.simplex.iter().map(|(t, w)| f(t) * w).collect();
    pairwise_sum(&values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cp1() -> QuadratureRule {
        QuadratureRule::new(ModelSpace::cp1(), 48, 16).unwrap()
    }

    fn cp2() -> QuadratureRule {
        QuadratureRule::new(ModelSpace::cp2(), 24, 12).unwrap()
    }

    #[test]
    fn total_masses() {
        assert!((integrate(|_| C64::new(1.0, 0.0), &cp1()).unwrap().re - 1.0).abs() < 1e-13);
        assert!((integrate(|_| C64::new(1.0, 0.0), &cp2()).unwrap().re - 0.5).abs() < 1e-13);
        assert!((cp2().total_mass() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn radial_beta_integral() {
        // ∫_0^∞ (1+u)^{-3} du = 1/2, the FS mean of 1/(1+|z|^2).
        let f = |x: &ChartPoint| {
            let z = x.to_chart(0).map(|p| p.z[0].norm_sqr()).unwrap_or(f64::INFINITY);
            C64::new(1.0 / (1.0 + z), 0.0)
        };
        assert!((integrate(f, &cp1()).unwrap().re - 0.5).abs() < 1e-13);
    }

    #[test]
    fn non_invariant_integrand_vanishes() {
        let f = |x: &ChartPoint| {
            let h = x.homogeneous();
            h[1] * h[0].conj() / h.iter().map(|w| w.norm_sqr()).sum::<f64>()
        };
        assert!(integrate(f, &cp2()).unwrap().norm() < 1e-14);
    }

    #[test]
    fn non_finite_integrand_rejected() {
        assert!(matches!(
            integrate(|_| C64::new(f64::NAN, 0.0), &cp1()),
            Err(LabError::Evaluation(_))
        ));
    }
}
