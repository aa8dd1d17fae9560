//! `(k,k)`-forms at a point.
//!
//! The basis element for a pair of increasing `k`-subsets `(I, J)` is
//! `e_{I,J} = (i dz_{I_1} ∧ dz̄_{J_1}) ∧ … ∧ (i dz_{I_k} ∧ dz̄_{J_k})`.
//! With this convention a real form has Hermitian coefficients and the
//! Kähler form `Σ g_ab e_{a,b}` has `ω^m / m! = det(g) e_top`.

use nalgebra::DMatrix;

use crate::error::{LabError, Result};
use crate::jet::{C64, ONE, ZERO};

/// Increasing `k`-subsets of `{0..m}` in lexicographic order.
pub fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= m {
        rec(0, m, k, &mut Vec::new(), &mut out);
    }
    out
}

/// All orderings of `items` with their signs, first element varying slowest.
pub fn permutations(items: &[usize]) -> Vec<(Vec<usize>, f64)> {
    if items.is_empty() {
        return vec![(Vec::new(), 1.0)];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        for (mut tail, s) in permutations(&rest) {
            tail.insert(0, head);
            out.push((tail, s * sign));
        }
    }
    out
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

/// Position of an increasing subset in [`subsets`] order.
pub fn subset_index(m: usize, subset: &[usize]) -> usize {
    let k = subset.len();
    let mut idx = 0;
    let mut prev = 0;
    for (t, &s) in subset.iter().enumerate() {
        for skipped in prev..s {
            idx += binomial(m - skipped - 1, k - t - 1);
        }
        prev = s + 1;
    }
    idx
}

/// Sign of the permutation sorting `v`, or `None` if `v` has a repeat.
fn sort_sign(v: &mut [usize]) -> Option<f64> {
    let mut sign = 1.0;
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        None
    } else {
        Some(sign)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormAtPoint {
    pub degree: usize,
    pub dim: usize,
    /// Row-major over `binom(dim, degree)` subsets: entry `(I, J)`.
    pub coeffs: Vec<C64>,
}

impl FormAtPoint {
    pub fn zero(degree: usize, dim: usize) -> Self {
        let s = binomial(dim, degree);
        Self {
            degree,
            dim,
            coeffs: vec![ZERO; s * s],
        }
    }

    pub fn scalar(value: C64, dim: usize) -> Self {
        Self {
            degree: 0,
            dim,
            coeffs: vec![value],
        }
    }

    pub fn one(dim: usize) -> Self {
        Self::scalar(ONE, dim)
    }

    /// The `(1,1)`-form `Σ g_ab i dz_a ∧ dz̄_b`.
    pub fn from_matrix(g: &DMatrix<C64>) -> Self {
        let m = g.nrows();
        let mut coeffs = Vec::with_capacity(m * m);
        for a in 0..m {
            for b in 0..m {
                coeffs.push(g[(a, b)]);
            }
        }
        Self {
            degree: 1,
            dim: m,
            coeffs,
        }
    }

    /// The single basis element `i dz_a ∧ dz̄_b`.
    pub fn pair(a: usize, b: usize, dim: usize) -> Self {
        let mut f = Self::zero(1, dim);
        f.coeffs[a * dim + b] = ONE;
        f
    }

    /// Coefficient matrix over subset pairs.
    pub fn matrix(&self) -> DMatrix<C64> {
        let s = self.side();
        DMatrix::from_row_slice(s, s, &self.coeffs)
    }

    pub fn from_subset_matrix(degree: usize, dim: usize, m: &DMatrix<C64>) -> Self {
        let s = binomial(dim, degree);
        assert_eq!(m.shape(), (s, s));
        let mut coeffs = Vec::with_capacity(s * s);
        for i in 0..s {
            for j in 0..s {
                coeffs.push(m[(i, j)]);
            }
        }
        Self { degree, dim, coeffs }
    }

    pub fn side(&self) -> usize {
        binomial(self.dim, self.degree)
    }

    pub fn coeff(&self, i: &[usize], j: &[usize]) -> C64 {
        let s = self.side();
        self.coeffs[subset_index(self.dim, i) * s + subset_index(self.dim, j)]
    }

    /// Coefficient of the top-degree basis element.
    pub fn top(&self) -> C64 {
        assert_eq!(self.degree, self.dim, "not a top-degree form");
        self.coeffs[0]
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            degree: self.degree,
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|x| x * c).collect(),
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            degree: self.degree,
            dim: self.dim,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(x, y)| x + y)
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Self {
        self.try_add(other).expect("form shape mismatch")
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(LabError::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        if self.degree != other.degree {
            return Err(LabError::DimensionMismatch {
                expected: self.degree,
                got: other.degree,
            });
        }
        Ok(())
    }

    pub fn try_wedge(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(LabError::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let m = self.dim;
        let degree = self.degree + other.degree;
        if degree > m {
            return Err(LabError::DegreeOverflow {
                lhs: self.degree,
                rhs: other.degree,
                dim: m,
            });
        }
        let sa = subsets(m, self.degree);
        let sb = subsets(m, other.degree);
        let mut out = Self::zero(degree, m);
        let side = out.side();
        let (na, nb) = (sa.len(), sb.len());
        for (i1, s_i1) in sa.iter().enumerate() {
            for (j1, s_j1) in sa.iter().enumerate() {
                let x = self.coeffs[i1 * na + j1];
                if x == ZERO {
                    continue;
                }
                for (i2, s_i2) in sb.iter().enumerate() {
                    let mut rows: Vec<usize> = s_i1.iter().chain(s_i2).copied().collect();
                    let Some(sr) = sort_sign(&mut rows) else { continue };
                    let ri = subset_index(m, &rows);
                    for (j2, s_j2) in sb.iter().enumerate() {
                        let y = other.coeffs[i2 * nb + j2];
                        if y == ZERO {
                            continue;
                        }
                        let mut cols: Vec<usize> = s_j1.iter().chain(s_j2).copied().collect();
                        let Some(sc) = sort_sign(&mut cols) else { continue };
                        let ci = subset_index(m, &cols);
                        out.coeffs[ri * side + ci] += x * y * (sr * sc);
                    }
                }
            }
        }
        Ok(out)
    }

    /// `self^k` under the wedge product.
    pub fn power(&self, k: usize) -> Result<Self> {
        let mut acc = Self::one(self.dim);
        for _ in 0..k {
            acc = acc.try_wedge(self)?;
        }
        Ok(acc)
    }

    /// Largest violation of `coeff(J, I) = conj(coeff(I, J))`.
    pub fn reality_defect(&self) -> f64 {
        let s = self.side();
        let mut worst: f64 = 0.0;
        for i in 0..s {
            for j in 0..s {
                let d = self.coeffs[j * s + i] - self.coeffs[i * s + j].conj();
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// Pointwise norm with respect to the Kähler metric whose form has
    /// coefficient matrix `g`: coefficients are expressed in a unitary
    /// coframe and the Frobenius norm is taken.
    pub fn norm_with_metric(&self, g: &DMatrix<C64>) -> Result<f64> {
        if self.degree == 0 {
            return Ok(self.coeffs[0].norm());
        }
        let chol = g.clone().cholesky().ok_or_else(|| {
            LabError::SingularInput("reference metric not positive definite".into())
        })?;
        let w = chol.l();
        let winv = w
            .try_inverse()
            .ok_or_else(|| LabError::SingularInput("reference metric singular".into()))?;
        let lam = compound(&winv, self.degree);
        let c = &lam * self.matrix() * lam.adjoint();
        Ok(c.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt())
    }
}

/// Free-function form of [`FormAtPoint::try_wedge`].
pub fn wedge(a: &FormAtPoint, b: &FormAtPoint) -> Result<FormAtPoint> {
    a.try_wedge(b)
}

/// `k`-th compound matrix: minors over increasing subset pairs.
pub fn compound(m: &DMatrix<C64>, k: usize) -> DMatrix<C64> {
    let n = m.nrows();
    let ss = subsets(n, k);
    let s = ss.len();
    let mut out = DMatrix::zeros(s, s);
    for (i, si) in ss.iter().enumerate() {
        for (j, sj) in ss.iter().enumerate() {
            let sub = DMatrix::from_fn(k, k, |a, b| m[(si[a], sj[b])]);
            out[(i, j)] = if k == 0 { ONE } else { sub.determinant() };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn subset_indexing_round_trips() {
        for m in 0..6 {
            for k in 0..=m {
                for (i, s) in subsets(m, k).iter().enumerate() {
                    assert_eq!(subset_index(m, s), i);
                }
                assert_eq!(subsets(m, k).len(), binomial(m, k));
            }
        }
    }

    #[test]
    fn unit_is_neutral() {
        let g = DMatrix::from_row_slice(2, 2, &[c(2.0), C64::new(0.5, 0.1), C64::new(0.5, -0.1), c(1.0)]);
        let omega = FormAtPoint::from_matrix(&g);
        assert_eq!(wedge(&omega, &FormAtPoint::one(2)).unwrap(), omega);
        assert_eq!(wedge(&FormAtPoint::one(2), &omega).unwrap(), omega);
    }

    #[test]
    fn product_of_coordinate_pairs_is_top() {
        let f = wedge(&FormAtPoint::pair(0, 0, 2), &FormAtPoint::pair(1, 1, 2)).unwrap();
        assert_eq!(f.degree, 2);
        assert_eq!(f.top(), c(1.0));
    }

    #[test]
    fn square_of_euclidean_form() {
        let alpha = FormAtPoint::pair(0, 0, 2).add(&FormAtPoint::pair(1, 1, 2));
        assert_eq!(alpha.power(2).unwrap().top(), c(2.0));
    }

    #[test]
    fn kahler_top_power_is_factorial_times_det() {
        let g = DMatrix::from_row_slice(2, 2, &[c(2.0), C64::new(0.5, 0.1), C64::new(0.5, -0.1), c(1.0)]);
        let top = FormAtPoint::from_matrix(&g).power(2).unwrap().top();
        let det = g.determinant();
        assert!((top - det * 2.0).norm() < 1e-15);
    }

    #[test]
    fn overflow_rejected() {
        let a = FormAtPoint::pair(0, 0, 1);
        assert!(matches!(
            wedge(&a, &a),
            Err(LabError::DegreeOverflow { .. })
        ));
    }

    #[test]
    fn off_diagonal_pairs_anticommute_in_the_frame() {
        // (i dz1∧dz̄2) ∧ (i dz2∧dz̄1) = -e_top.
        let f = wedge(&FormAtPoint::pair(0, 1, 2), &FormAtPoint::pair(1, 0, 2)).unwrap();
        assert_eq!(f.top(), c(-1.0));
    }

    #[test]
    fn invariant_norm_of_metric_form() {
        let g = DMatrix::from_row_slice(2, 2, &[c(3.0), C64::new(1.0, 1.0), C64::new(1.0, -1.0), c(2.0)]);
        let omega = FormAtPoint::from_matrix(&g);
        // In a unitary coframe ω is the identity: Frobenius norm √m.
        assert!((omega.norm_with_metric(&g).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        let top = omega.power(2).unwrap();
        assert!((top.norm_with_metric(&g).unwrap() - 2.0).abs() < 1e-13);
    }
}
