//! Mixed 2-jets over `m` complex coordinates.
//!
//! A [`MixedJet2`] carries the value of a smooth function together with its
//! holomorphic derivatives `∂_a`, antiholomorphic derivatives `∂̄_a` and the
//! mixed second derivatives `∂_a ∂̄_b`. Pure `∂∂` and `∂̄∂̄` entries are not
//! tracked: the algebra is closed under products and composition with scalar
//! functions at this truncation, and Chern curvature only needs these terms.
//!
//! [`MatrixJet`] is the matrix-valued analogue used for metric frames.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{LabError, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Default bound on the condition estimate accepted by [`MatrixJet::inverse`].
pub const DEFAULT_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct MixedJet2 {
    pub value: C64,
    pub d: Vec<C64>,
    pub dbar: Vec<C64>,
    /// Row-major `m × m`; entry `(a, b)` is `∂_a ∂̄_b`.
    pub mixed: Vec<C64>,
}

impl MixedJet2 {
    pub fn constant(value: C64, dim: usize) -> Self {
        Self {
            value,
            d: vec![ZERO; dim],
            dbar: vec![ZERO; dim],
            mixed: vec![ZERO; dim * dim],
        }
    }

    pub fn real(value: f64, dim: usize) -> Self {
        Self::constant(C64::new(value, 0.0), dim)
    }

    /// Jet of the chart coordinate `z_a` at the point where `z_a = value`.
    pub fn coordinate(value: C64, index: usize, dim: usize) -> Self {
        let mut jet = Self::constant(value, dim);
        jet.d[index] = ONE;
        jet
    }

    /// Jet of `conj(z_a)`.
    pub fn conj_coordinate(value: C64, index: usize, dim: usize) -> Self {
        let mut jet = Self::constant(value.conj(), dim);
        jet.dbar[index] = ONE;
        jet
    }

    /// Jets of all chart coordinates at `point`.
    pub fn coordinates(point: &[C64]) -> Vec<Self> {
        let dim = point.len();
        point
            .iter()
            .enumerate()
            .map(|(a, &z)| Self::coordinate(z, a, dim))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    #[inline]
    pub fn mixed_at(&self, a: usize, b: usize) -> C64 {
        self.mixed[a * self.dim() + b]
    }

    pub fn conj(&self) -> Self {
        let m = self.dim();
        let mut mixed = vec![ZERO; m * m];
        for a in 0..m {
            for b in 0..m {
                mixed[a * m + b] = self.mixed[b * m + a].conj();
            }
        }
        Self {
            value: self.value.conj(),
            d: self.dbar.iter().map(|x| x.conj()).collect(),
            dbar: self.d.iter().map(|x| x.conj()).collect(),
            mixed,
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            value: self.value * c,
            d: self.d.iter().map(|x| x * c).collect(),
            dbar: self.dbar.iter().map(|x| x * c).collect(),
            mixed: self.mixed.iter().map(|x| x * c).collect(),
        }
    }

    pub fn add_constant(&self, c: C64) -> Self {
        let mut out = self.clone();
        out.value += c;
        out
    }

    /// Leibniz product; fails on dimension mismatch.
    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        let m = self.dim();
        let (u, v) = (self.value, other.value);
        let d = (0..m).map(|c| self.d[c] * v + u * other.d[c]).collect();
        let dbar = (0..m).map(|c| self.dbar[c] * v + u * other.dbar[c]).collect();
        let mut mixed = vec![ZERO; m * m];
        for a in 0..m {
            for b in 0..m {
                mixed[a * m + b] = self.mixed[a * m + b] * v
                    + self.d[a] * other.dbar[b]
                    + self.dbar[b] * other.d[a]
                    + u * other.mixed[a * m + b];
            }
        }
        Ok(Self {
            value: u * v,
            d,
            dbar,
            mixed,
        })
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Ok(self.zip(other, |x, y| x + y))
    }

    fn zip(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Self {
        Self {
            value: f(self.value, other.value),
            d: self.d.iter().zip(&other.d).map(|(x, y)| f(*x, *y)).collect(),
            dbar: self
                .dbar
                .iter()
                .zip(&other.dbar)
                .map(|(x, y)| f(*x, *y))
                .collect(),
            mixed: self
                .mixed
                .iter()
                .zip(&other.mixed)
                .map(|(x, y)| f(*x, *y))
                .collect(),
        }
    }

    /// Composition `u ∘ f` where `u` returns `(u(w), u'(w), u''(w))`.
    ///
    /// `u` must be complex-analytic near the value, or `f` must be real-valued
    /// and `u` a real `C²` function.
    pub fn compose_with(&self, u: impl Fn(C64) -> (C64, C64, C64)) -> Self {
        let m = self.dim();
        let (u0, u1, u2) = u(self.value);
        let mut mixed = vec![ZERO; m * m];
        for a in 0..m {
            for b in 0..m {
                mixed[a * m + b] = u2 * self.d[a] * self.dbar[b] + u1 * self.mixed[a * m + b];
            }
        }
        Self {
            value: u0,
            d: self.d.iter().map(|x| u1 * x).collect(),
            dbar: self.dbar.iter().map(|x| u1 * x).collect(),
            mixed,
        }
    }

    pub fn exp(&self) -> Self {
        self.compose_with(|w| {
            let e = w.exp();
            (e, e, e)
        })
    }

    /// Natural logarithm of a jet with positive real value.
    pub fn ln(&self) -> Result<Self> {
        let w = self.value;
        if !(w.re > 0.0) || w.im.abs() > 1e-12 * w.re.max(1.0) {
            return Err(LabError::SingularInput(format!(
                "logarithm of non-positive value {w}"
            )));
        }
        Ok(self.compose_with(|w| {
            let inv = w.inv();
            (w.ln(), inv, -inv * inv)
        }))
    }

    pub fn recip(&self) -> Result<Self> {
        if self.value.norm() == 0.0 || !self.value.is_finite() {
            return Err(LabError::SingularInput(format!(
                "reciprocal of {}",
                self.value
            )));
        }
        Ok(self.compose_with(|w| {
            let inv = w.inv();
            (inv, -inv * inv, 2.0 * inv * inv * inv)
        }))
    }

    /// Real power of a jet with positive real value.
    pub fn powf(&self, exponent: f64) -> Result<Self> {
        if !(self.value.re > 0.0) {
            return Err(LabError::SingularInput(format!(
                "real power of non-positive value {}",
                self.value
            )));
        }
        Ok(self.compose_with(|w| {
            let x = w.re;
            let v = x.powf(exponent);
            (
                C64::new(v, 0.0),
                C64::new(exponent * v / x, 0.0),
                C64::new(exponent * (exponent - 1.0) * v / (x * x), 0.0),
            )
        }))
    }

    pub fn powi(&self, n: u32) -> Self {
        self.compose_with(|w| {
            let n_c = n as f64;
            let p0 = w.powu(n);
            let p1 = if n >= 1 { w.powu(n - 1) * n_c } else { ZERO };
            let p2 = if n >= 2 {
                w.powu(n - 2) * (n_c * (n_c - 1.0))
            } else {
                ZERO
            };
            (p0, p1, p2)
        })
    }

    /// Largest absolute value among all stored components.
    pub fn max_abs(&self) -> f64 {
        std::iter::once(&self.value)
            .chain(&self.d)
            .chain(&self.dbar)
            .chain(&self.mixed)
            .map(|x| x.norm())
            .fold(0.0, f64::max)
    }
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(LabError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Free-function form of [`MixedJet2::try_mul`].
pub fn jet_mul(a: &MixedJet2, b: &MixedJet2) -> Result<MixedJet2> {
    a.try_mul(b)
}

/// Free-function form of [`MixedJet2::compose_with`].
pub fn jet_compose(u: impl Fn(C64) -> (C64, C64, C64), f: &MixedJet2) -> MixedJet2 {
    f.compose_with(u)
}

impl Add for MixedJet2 {
    type Output = MixedJet2;
    fn add(self, rhs: Self) -> Self {
        self.try_add(&rhs).expect("jet dimension mismatch")
    }
}

impl Sub for MixedJet2 {
    type Output = MixedJet2;
    fn sub(self, rhs: Self) -> Self {
        assert_eq!(self.dim(), rhs.dim(), "jet dimension mismatch");
        self.zip(&rhs, |x, y| x - y)
    }
}

impl Mul for MixedJet2 {
    type Output = MixedJet2;
    fn mul(self, rhs: Self) -> Self {
        self.try_mul(&rhs).expect("jet dimension mismatch")
    }
}

impl<'a> Mul<&'a MixedJet2> for &'a MixedJet2 {
    type Output = MixedJet2;
    fn mul(self, rhs: &MixedJet2) -> MixedJet2 {
        self.try_mul(rhs).expect("jet dimension mismatch")
    }
}

impl Neg for MixedJet2 {
    type Output = MixedJet2;
    fn neg(self) -> Self {
        self.scale(C64::new(-1.0, 0.0))
    }
}

/// Scalar arithmetic shared by plain complex numbers and jets, so that test
/// functions, metric weights and random expressions can be written once and
/// evaluated either pointwise or with derivatives.
pub trait JetScalar:
    Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn value(&self) -> C64;
    fn constant_like(&self, c: C64) -> Self;
    fn conj(&self) -> Self;
    fn scale(&self, c: C64) -> Self;
    fn compose(&self, u: &dyn Fn(C64) -> (C64, C64, C64)) -> Self;

    fn real_const(&self, x: f64) -> Self {
        self.constant_like(C64::new(x, 0.0))
    }

    fn abs_sq(&self) -> Self {
        self.clone() * self.conj()
    }

    fn re(&self) -> Self {
        (self.clone() + self.conj()).scale(C64::new(0.5, 0.0))
    }

    fn exp(&self) -> Self {
        self.compose(&|w| {
            let e = w.exp();
            (e, e, e)
        })
    }

    /// Logarithm without domain checks; callers guarantee a positive value.
    fn ln_unchecked(&self) -> Self {
        self.compose(&|w| {
            let inv = w.inv();
            (w.ln(), inv, -inv * inv)
        })
    }

    fn recip_unchecked(&self) -> Self {
        self.compose(&|w| {
            let inv = w.inv();
            (inv, -inv * inv, 2.0 * inv * inv * inv)
        })
    }

    fn powi(&self, n: u32) -> Self {
        self.compose(&move |w| {
            let n_c = n as f64;
            let p1 = if n >= 1 { w.powu(n - 1) * n_c } else { ZERO };
            let p2 = if n >= 2 {
                w.powu(n - 2) * (n_c * (n_c - 1.0))
            } else {
                ZERO
            };
            (w.powu(n), p1, p2)
        })
    }
}

impl JetScalar for C64 {
    fn value(&self) -> C64 {
        *self
    }
    fn constant_like(&self, c: C64) -> Self {
        c
    }
    fn conj(&self) -> Self {
        Complex64::conj(self)
    }
    fn scale(&self, c: C64) -> Self {
        self * c
    }
    fn compose(&self, u: &dyn Fn(C64) -> (C64, C64, C64)) -> Self {
        u(*self).0
    }
}

impl JetScalar for MixedJet2 {
    fn value(&self) -> C64 {
        self.value
    }
    fn constant_like(&self, c: C64) -> Self {
        MixedJet2::constant(c, self.dim())
    }
    fn conj(&self) -> Self {
        MixedJet2::conj(self)
    }
    fn scale(&self, c: C64) -> Self {
        MixedJet2::scale(self, c)
    }
    fn compose(&self, u: &dyn Fn(C64) -> (C64, C64, C64)) -> Self {
        self.compose_with(u)
    }
}

/// An `r × r` matrix of mixed 2-jets sharing one coordinate dimension,
/// stored as one matrix per derivative slot.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixJet {
    pub value: DMatrix<C64>,
    pub d: Vec<DMatrix<C64>>,
    pub dbar: Vec<DMatrix<C64>>,
    /// Index `a * dim + b` holds `∂_a ∂̄_b`.
    pub mixed: Vec<DMatrix<C64>>,
}

impl MatrixJet {
    pub fn constant(value: DMatrix<C64>, dim: usize) -> Self {
        let (r, c) = value.shape();
        let z = DMatrix::zeros(r, c);
        Self {
            value,
            d: vec![z.clone(); dim],
            dbar: vec![z.clone(); dim],
            mixed: vec![z; dim * dim],
        }
    }

    pub fn identity(r: usize, dim: usize) -> Self {
        Self::constant(DMatrix::identity(r, r), dim)
    }

    pub fn rank(&self) -> usize {
        self.value.nrows()
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn from_entries(entries: &[Vec<MixedJet2>]) -> Result<Self> {
        let r = entries.len();
        let dim = entries
            .first()
            .and_then(|row| row.first())
            .map(|j| j.dim())
            .unwrap_or(0);
        let mut out = Self::constant(DMatrix::zeros(r, r), dim);
        for (i, row) in entries.iter().enumerate() {
            check_dims(r, row.len())?;
            for (j, jet) in row.iter().enumerate() {
                check_dims(dim, jet.dim())?;
                out.set_entry(i, j, jet);
            }
        }
        Ok(out)
    }

    pub fn entry(&self, i: usize, j: usize) -> MixedJet2 {
        MixedJet2 {
            value: self.value[(i, j)],
            d: self.d.iter().map(|m| m[(i, j)]).collect(),
            dbar: self.dbar.iter().map(|m| m[(i, j)]).collect(),
            mixed: self.mixed.iter().map(|m| m[(i, j)]).collect(),
        }
    }

    pub fn set_entry(&mut self, i: usize, j: usize, jet: &MixedJet2) {
        self.value[(i, j)] = jet.value;
        for (m, x) in self.d.iter_mut().zip(&jet.d) {
            m[(i, j)] = *x;
        }
        for (m, x) in self.dbar.iter_mut().zip(&jet.dbar) {
            m[(i, j)] = *x;
        }
        for (m, x) in self.mixed.iter_mut().zip(&jet.mixed) {
            m[(i, j)] = *x;
        }
    }

    /// Diagonal matrix jet built from scalar jets.
    pub fn diagonal(entries: &[MixedJet2]) -> Self {
        let r = entries.len();
        let dim = entries.first().map(|j| j.dim()).unwrap_or(0);
        let mut out = Self::constant(DMatrix::zeros(r, r), dim);
        for (i, jet) in entries.iter().enumerate() {
            out.set_entry(i, i, jet);
        }
        out
    }

    /// Jet of `F F*` where the columns of `F` are holomorphic and `df[a] = ∂_a F`.
    pub fn holomorphic_gram(f: &DMatrix<C64>, df: &[DMatrix<C64>]) -> Self {
        let dim = df.len();
        let value = f * f.adjoint();
        let d: Vec<_> = df.iter().map(|x| x * f.adjoint()).collect();
        let dbar: Vec<_> = d.iter().map(|x| x.adjoint()).collect();
        let mut mixed = Vec::with_capacity(dim * dim);
        for a in 0..dim {
            for b in 0..dim {
                mixed.push(&df[a] * df[b].adjoint());
            }
        }
        Self {
            value,
            d,
            dbar,
            mixed,
        }
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        check_dims(self.value.ncols(), other.value.nrows())?;
        let m = self.dim();
        let (x, y) = (&self.value, &other.value);
        let d = (0..m)
            .map(|a| &self.d[a] * y + x * &other.d[a])
            .collect();
        let dbar = (0..m)
            .map(|a| &self.dbar[a] * y + x * &other.dbar[a])
            .collect();
        let mut mixed = Vec::with_capacity(m * m);
        for a in 0..m {
            for b in 0..m {
                mixed.push(
                    &self.mixed[a * m + b] * y
                        + &self.d[a] * &other.dbar[b]
                        + &self.dbar[b] * &other.d[a]
                        + x * &other.mixed[a * m + b],
                );
            }
        }
        Ok(Self {
            value: x * y,
            d,
            dbar,
            mixed,
        })
    }

    /// Multiply every entry by a scalar jet.
    pub fn scale_by(&self, s: &MixedJet2) -> Result<Self> {
        check_dims(self.dim(), s.dim())?;
        let m = self.dim();
        let v = s.value;
        let d = (0..m).map(|a| &self.d[a] * v + &self.value * s.d[a]).collect();
        let dbar = (0..m)
            .map(|a| &self.dbar[a] * v + &self.value * s.dbar[a])
            .collect();
        let mut mixed = Vec::with_capacity(m * m);
        for a in 0..m {
            for b in 0..m {
                mixed.push(
                    &self.mixed[a * m + b] * v
                        + &self.d[a] * s.dbar[b]
                        + &self.dbar[b] * s.d[a]
                        + &self.value * s.mixed[a * m + b],
                );
            }
        }
        Ok(Self {
            value: &self.value * v,
            d,
            dbar,
            mixed,
        })
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        check_dims(self.rank(), other.rank())?;
        Ok(Self {
            value: &self.value + &other.value,
            d: self.d.iter().zip(&other.d).map(|(x, y)| x + y).collect(),
            dbar: self.dbar.iter().zip(&other.dbar).map(|(x, y)| x + y).collect(),
            mixed: self
                .mixed
                .iter()
                .zip(&other.mixed)
                .map(|(x, y)| x + y)
                .collect(),
        })
    }

    pub fn transpose(&self) -> Self {
        Self {
            value: self.value.transpose(),
            d: self.d.iter().map(|x| x.transpose()).collect(),
            dbar: self.dbar.iter().map(|x| x.transpose()).collect(),
            mixed: self.mixed.iter().map(|x| x.transpose()).collect(),
        }
    }

    /// Entrywise complex conjugate (swaps the roles of `∂` and `∂̄`).
    pub fn conj(&self) -> Self {
        let m = self.dim();
        let mut mixed = Vec::with_capacity(m * m);
        for a in 0..m {
            for b in 0..m {
                mixed.push(self.mixed[b * m + a].map(|x| x.conj()));
            }
        }
        Self {
            value: self.value.map(|x| x.conj()),
            d: self.dbar.iter().map(|x| x.map(|v| v.conj())).collect(),
            dbar: self.d.iter().map(|x| x.map(|v| v.conj())).collect(),
            mixed,
        }
    }

    /// Inverse with derivative propagation; rejects value parts whose
    /// 1-norm condition estimate exceeds `limit`.
    pub fn inverse_with_limit(&self, limit: f64) -> Result<Self> {
        let inv = checked_inverse(&self.value, limit)?;
        let m = self.dim();
        let ida: Vec<_> = self.d.iter().map(|x| &inv * x * &inv).collect();
        let idb: Vec<_> = self.dbar.iter().map(|x| &inv * x * &inv).collect();
        let mut mixed = Vec::with_capacity(m * m);
        for a in 0..m {
            for b in 0..m {
                let t = -(&inv * &self.mixed[a * m + b] * &inv)
                    + &ida[a] * &self.dbar[b] * &inv
                    + &idb[b] * &self.d[a] * &inv;
                mixed.push(t);
            }
        }
        Ok(Self {
            value: inv,
            d: ida.into_iter().map(|x| -x).collect(),
            dbar: idb.into_iter().map(|x| -x).collect(),
            mixed,
        })
    }

    pub fn inverse(&self) -> Result<Self> {
        self.inverse_with_limit(DEFAULT_CONDITION_LIMIT)
    }

    /// Largest entry magnitude over all derivative slots (value excluded).
    pub fn max_derivative_abs(&self) -> f64 {
        self.d
            .iter()
            .chain(&self.dbar)
            .chain(&self.mixed)
            .flat_map(|m| m.iter())
            .map(|x| x.norm())
            .fold(0.0, f64::max)
    }
}

/// Free-function form of [`MatrixJet::inverse`].
pub fn matrix_jet_inverse(h: &MatrixJet) -> Result<MatrixJet> {
    h.inverse()
}

/// Inverse of a square matrix whose 1-norm condition estimate is at most `limit`.
pub fn checked_inverse(m: &DMatrix<C64>, limit: f64) -> Result<DMatrix<C64>> {
    let inv = m.clone().try_inverse().ok_or(LabError::Conditioning {
        condition: f64::INFINITY,
        limit,
    })?;
    let condition = one_norm(m) * one_norm(&inv);
    if !condition.is_finite() || condition > limit {
        return Err(LabError::Conditioning { condition, limit });
    }
    Ok(inv)
}

pub(crate) fn one_norm(m: &DMatrix<C64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}
