//! Homogeneous polynomials on `C^{n+1}`: the coordinate form of sections of
//! `O(q)` over CP^n.

use nalgebra::DMatrix;

use crate::error::{LabError, Result};
use crate::jet::{C64, ONE, ZERO};
use crate::model::ChartPoint;
use crate::sections::{exponents, SectionCoeffs, SectionSpace};

#[derive(Debug, Clone, PartialEq)]
pub struct HomPoly {
    pub n: usize,
    pub q: u32,
    /// Coefficients in the order of [`exponents`]`(n, q)`.
    pub coeffs: Vec<C64>,
}

fn ln_factorial(k: u32) -> f64 {
    (2..=k).map(|j| f64::from(j).ln()).sum()
}

/// Product of univariate coefficient vectors.
pub fn poly_mul(a: &[C64], b: &[C64]) -> Vec<C64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![ZERO; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add_into(acc: &mut [C64], a: &[C64], scale: C64) {
    for (x, y) in acc.iter_mut().zip(a) {
        *x += y * scale;
    }
}

/// Horner evaluation of `Σ c_j x^j`.
pub fn horner(c: &[C64], x: C64) -> C64 {
    c.iter().rev().fold(ZERO, |acc, a| acc * x + a)
}

/// Horner evaluation with the first derivative.
pub fn horner_with_derivative(c: &[C64], x: C64) -> (C64, C64) {
    let mut v = ZERO;
    let mut d = ZERO;
    for a in c.iter().rev() {
        d = d * x + v;
        v = v * x + a;
    }
    (v, d)
}

impl HomPoly {
    pub fn new(n: usize, q: u32, coeffs: Vec<C64>) -> Result<Self> {
        let expected = exponents(n, q).len();
        if coeffs.len() != expected {
            return Err(LabError::DimensionMismatch {
                expected,
                got: coeffs.len(),
            });
        }
        Ok(Self { n, q, coeffs })
    }

    /// `Σ_j c_j Z_0^{q−j} Z_1^j` on CP^1.
    pub fn from_univariate(c: &[C64]) -> Self {
        let q = (c.len() - 1) as u32;
        let coeffs = exponents(1, q).iter().map(|e| c[e[1] as usize]).collect();
        Self { n: 1, q, coeffs }
    }

    /// Build from `(exponent, coefficient)` pairs; unspecified terms vanish.
    pub fn from_terms(n: usize, q: u32, terms: &[(Vec<u32>, C64)]) -> Result<Self> {
        let exps = exponents(n, q);
        let mut coeffs = vec![ZERO; exps.len()];
        for (e, c) in terms {
            let i = exps.iter().position(|x| x == e).ok_or_else(|| {
                LabError::Rejected(format!("exponent {e:?} is not of degree {q} in {} variables", n + 1))
            })?;
            coeffs[i] += c;
        }
        Ok(Self { n, q, coeffs })
    }

    pub fn exponents(&self) -> Vec<Vec<u32>> {
        exponents(self.n, self.q)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == ZERO)
    }

    /// Coefficients of `z^j` in chart 0 of CP^1.
    pub fn univariate(&self) -> Result<Vec<C64>> {
        if self.n != 1 {
            return Err(LabError::Unsupported {
                requested: format!("univariate form of a polynomial on CP^{}", self.n),
                supported: "CP^1".into(),
            });
        }
        let mut out = vec![ZERO; self.q as usize + 1];
        for (e, c) in self.exponents().iter().zip(&self.coeffs) {
            out[e[1] as usize] = *c;
        }
        Ok(out)
    }

    /// The unitarily invariant norm `(Σ |c_α|² α!/q!)^{1/2}`, so that
    /// `|f(Z)| ≤ ‖f‖ ‖Z‖^q`.
    pub fn bombieri_norm(&self) -> f64 {
        let lq = ln_factorial(self.q);
        self.exponents()
            .iter()
            .zip(&self.coeffs)
            .map(|(e, c)| c.norm_sqr() * (e.iter().map(|k| ln_factorial(*k)).sum::<f64>() - lq).exp())
            .sum::<f64>()
            .sqrt()
    }

    pub fn eval_homogeneous(&self, z: &[C64]) -> C64 {
        self.exponents()
            .iter()
            .zip(&self.coeffs)
            .map(|(e, c)| c * e.iter().zip(z).map(|(k, w)| w.powu(*k)).product::<C64>())
            .sum()
    }

    /// Value and gradient with respect to the chart coordinates of `x`.
    pub fn eval_chart(&self, x: &ChartPoint) -> (C64, Vec<C64>) {
        let z = x.homogeneous();
        let mut v = ZERO;
        let mut g = vec![ZERO; self.n];
        for (e, c) in self.exponents().iter().zip(&self.coeffs) {
            if *c == ZERO {
                continue;
            }
            let pw: Vec<C64> = e.iter().zip(&z).map(|(k, w)| w.powu(*k)).collect();
            v += c * pw.iter().product::<C64>();
            for (a, slot) in g.iter_mut().enumerate() {
                let k = x.homogeneous_index(a);
                if e[k] == 0 {
                    continue;
                }
                let mut t = c * C64::new(e[k] as f64, 0.0) * z[k].powu(e[k] - 1);
                for (j, p) in pw.iter().enumerate() {
                    if j != k {
                        t *= p;
                    }
                }
                *slot += t;
            }
        }
        (v, g)
    }

    /// `|f(Z)| / (‖f‖ ‖Z‖^q)`, a chart-free residual in `[0, 1]`.
    pub fn normalized_residual(&self, x: &ChartPoint) -> f64 {
        let z = x.homogeneous();
        let nz: f64 = z.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
        let norm = self.bombieri_norm();
        if norm == 0.0 {
            return 0.0;
        }
        self.eval_homogeneous(&z).norm() / (norm * nz.powi(self.q as i32))
    }

    /// Coefficients in `τ` of `f(a + τ b)`, with the derivative of those
    /// coefficients along `a ↦ a + ε da`.
    pub fn compose_affine(&self, a: &[C64], b: &[C64], da: Option<&[C64]>) -> (Vec<C64>, Vec<C64>) {
        let q = self.q as usize;
        let m = self.n + 1;
        // pows[k][j] = (a_k + b_k τ)^j and its tangent j da_k (a_k + b_k τ)^{j−1}.
        let mut pows = vec![vec![vec![ONE]]; m];
        let mut tans = vec![vec![vec![ZERO]]; m];
        for k in 0..m {
            let lin = [a[k], b[k]];
            for j in 1..=q {
                let next = poly_mul(&pows[k][j - 1], &lin);
                let mut tan = vec![ZERO; j + 1];
                if let Some(da) = da {
                    poly_add_into(&mut tan, &pows[k][j - 1], da[k] * C64::new(j as f64, 0.0));
                }
                pows[k].push(next);
                tans[k].push(tan);
            }
        }
        let mut val = vec![ZERO; q + 1];
        let mut der = vec![ZERO; q + 1];
        for (e, c) in self.exponents().iter().zip(&self.coeffs) {
            if *c == ZERO {
                continue;
            }
            let mut prod = vec![ONE];
            for k in 0..m {
                prod = poly_mul(&prod, &pows[k][e[k] as usize]);
            }
            poly_add_into(&mut val, &prod, *c);
            if da.is_some() {
                for k in 0..m {
                    if e[k] == 0 {
                        continue;
                    }
                    let mut t = tans[k][e[k] as usize].clone();
                    for (j, pw) in pows.iter().enumerate() {
                        if j != k {
                            t = poly_mul(&t, &pw[e[j] as usize]);
                        }
                    }
                    poly_add_into(&mut der, &t, *c);
                }
            }
        }
        (val, der)
    }
}

impl HomPoly {
    fn index_map(&self) -> std::collections::HashMap<Vec<u32>, usize> {
        self.exponents().into_iter().enumerate().map(|(i, e)| (e, i)).collect()
    }

    pub fn mul(&self, other: &Self) -> Self {
        let q = self.q + other.q;
        let mut out = Self {
            n: self.n,
            q,
            coeffs: vec![ZERO; exponents(self.n, q).len()],
        };
        let index = out.index_map();
        let (ea, eb) = (self.exponents(), other.exponents());
        for (x, cx) in ea.iter().zip(&self.coeffs) {
            if *cx == ZERO {
                continue;
            }
            for (y, cy) in eb.iter().zip(&other.coeffs) {
                let e: Vec<u32> = x.iter().zip(y).map(|(a, b)| a + b).collect();
                out.coeffs[index[&e]] += cx * cy;
            }
        }
        out
    }

    /// The polynomial `W ↦ f(U W)`.
    pub fn compose_linear(&self, u: &DMatrix<C64>) -> Self {
        let m = self.n + 1;
        let one = Self {
            n: self.n,
            q: 0,
            coeffs: vec![ONE],
        };
        // pows[k][j] = (Σ_l U_kl W_l)^j.
        let pows: Vec<Vec<Self>> = (0..m)
            .map(|k| {
                let mut lin = Self {
                    n: self.n,
                    q: 1,
                    coeffs: vec![ZERO; m],
                };
                let idx = lin.index_map();
                for l in 0..m {
                    let mut e = vec![0; m];
                    e[l] = 1;
                    lin.coeffs[idx[&e]] = u[(k, l)];
                }
                let mut v = vec![one.clone()];
                for j in 1..=self.q as usize {
                    let next = v[j - 1].mul(&lin);
                    v.push(next);
                }
                v
            })
            .collect();
        let mut out = Self {
            n: self.n,
            q: self.q,
            coeffs: vec![ZERO; self.coeffs.len()],
        };
        for (e, c) in self.exponents().iter().zip(&self.coeffs) {
            if *c == ZERO {
                continue;
            }
            let mut t = one.clone();
            for k in 0..m {
                t = t.mul(&pows[k][e[k] as usize]);
            }
            for (o, v) in out.coeffs.iter_mut().zip(&t.coeffs) {
                *o += c * v;
            }
        }
        out
    }

    /// On CP^2 in chart 0: `f(1, w_1, w_2) = Σ_j F_j(w_1) w_2^j`, returned as
    /// the coefficient vectors of the `F_j`.
    pub fn hidden_variable_form(&self) -> Vec<Vec<C64>> {
        let q = self.q as usize;
        let mut out: Vec<Vec<C64>> = (0..=q).map(|j| vec![ZERO; q - j + 1]).collect();
        for (e, c) in self.exponents().iter().zip(&self.coeffs) {
            out[e[2] as usize][e[1] as usize] = *c;
        }
        out
    }
}

/// Per-summand polynomials of a section of `L^p ⊗ E`.
pub fn section_polynomials(space: &SectionSpace, coeffs: &SectionCoeffs) -> Vec<HomPoly> {
    let n = space.n();
    let spec = &space.spec;
    let mut polys: Vec<HomPoly> = spec
        .degrees
        .iter()
        .map(|d| {
            let q = spec.p + d;
            HomPoly {
                n,
                q,
                coeffs: vec![ZERO; exponents(n, q).len()],
            }
        })
        .collect();
    let index: Vec<Vec<Vec<u32>>> = polys.iter().map(|p| p.exponents()).collect();
    for (col, label) in space.basis.iter().enumerate() {
        let j = label.summand;
        let i = index[j]
            .iter()
            .position(|e| *e == label.exponent)
            .expect("basis exponent of the summand degree");
        polys[j].coeffs[i] = coeffs.0[col];
    }
    polys
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64, y: f64) -> C64 {
        C64::new(x, y)
    }

    #[test]
    fn univariate_round_trip_and_eval() {
        let u = vec![c(1.0, 0.0), c(0.0, 2.0), c(-3.0, 1.0)];
        let f = HomPoly::from_univariate(&u);
        assert_eq!(f.univariate().unwrap(), u);
        let z = c(0.3, -0.7);
        let x = ChartPoint::new(0, vec![z]).unwrap();
        let (v, g) = f.eval_chart(&x);
        let (hv, hd) = horner_with_derivative(&u, z);
        assert!((v - hv).norm() < 1e-14 && (g[0] - hd).norm() < 1e-14);
    }

    #[test]
    fn bombieri_bound_and_invariance() {
        // (Z_0 + Z_1)^2 has norm ‖(1,1)‖² = 2 and attains the bound.
        let f = HomPoly::from_univariate(&[c(1.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]);
        assert!((f.bombieri_norm() - 2.0).abs() < 1e-14);
        let x = ChartPoint::new(0, vec![c(1.0, 0.0)]).unwrap();
        assert!((f.normalized_residual(&x) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn chart_gradient_matches_difference_quotient() {
        let f = HomPoly::from_terms(
            2,
            3,
            &[
                (vec![3, 0, 0], c(1.0, 0.5)),
                (vec![1, 1, 1], c(-2.0, 0.0)),
                (vec![0, 2, 1], c(0.3, 0.3)),
                (vec![0, 0, 3], c(0.0, 1.0)),
            ],
        )
        .unwrap();
        let x = ChartPoint::new(1, vec![c(0.4, 0.1), c(-0.2, 0.6)]).unwrap();
        let (_, g) = f.eval_chart(&x);
        let h = 1e-6;
        for a in 0..2 {
            let mut zp = x.z.clone();
            let mut zm = x.z.clone();
            zp[a] += h;
            zm[a] -= h;
            let fp = f.eval_chart(&ChartPoint::new(1, zp).unwrap()).0;
            let fm = f.eval_chart(&ChartPoint::new(1, zm).unwrap()).0;
            assert!(((fp - fm) / (2.0 * h) - g[a]).norm() < 1e-8);
        }
    }

    #[test]
    fn linear_composition_preserves_values_and_norm() {
        let f = HomPoly::from_terms(2, 3, &[(vec![3, 0, 0], c(1.0, 0.0)), (vec![0, 1, 2], c(0.5, -2.0)), (vec![1, 1, 1], c(0.0, 1.0))]).unwrap();
        let mut rng = crate::rng::stream(2, "unitary", 0);
        let u = crate::roots::random_unitary(3, &mut rng);
        let g = f.compose_linear(&u);
        let w = [c(0.3, 0.1), c(-0.4, 0.9), c(1.1, 0.0)];
        let z: Vec<C64> = (0..3).map(|k| (0..3).map(|l| u[(k, l)] * w[l]).sum()).collect();
        assert!((g.eval_homogeneous(&w) - f.eval_homogeneous(&z)).norm() < 1e-13);
        assert!((g.bombieri_norm() - f.bombieri_norm()).abs() < 1e-13);
    }

    #[test]
    fn affine_composition_and_tangent() {
        let f = HomPoly::from_terms(2, 2, &[(vec![1, 1, 0], c(1.0, 0.0)), (vec![0, 0, 2], c(2.0, -1.0))]).unwrap();
        let a = [c(1.0, 0.0), c(0.5, 0.2), c(-0.3, 0.0)];
        let b = [c(0.1, 0.0), c(-1.0, 0.4), c(0.7, 0.7)];
        let da = [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)];
        let (val, der) = f.compose_affine(&a, &b, Some(&da));
        let tau = c(0.3, -0.4);
        let z: Vec<C64> = a.iter().zip(&b).map(|(x, y)| x + y * tau).collect();
        assert!((horner(&val, tau) - f.eval_homogeneous(&z)).norm() < 1e-14);
        let h = 1e-6;
        let shift = |s: f64| {
            let a2: Vec<C64> = a.iter().zip(&da).map(|(x, d)| x + d * s).collect();
            horner(&f.compose_affine(&a2, &b, None).0, tau)
        };
        assert!(((shift(h) - shift(-h)) / (2.0 * h) - horner(&der, tau)).norm() < 1e-8);
    }
}
