//! Spaces of holomorphic sections `H⁰(CPⁿ, O(p) ⊗ E)` with `E = ⊕ O(d_j)`.
//!
//! Sections are coefficient vectors over the monomial basis `Z^α` of each
//! summand `O(p + d_j)`. In the chart `{Z_c ≠ 0}` a monomial is represented by
//! the polynomial `w^α` against the frame `Z_c^{p+d_j}` whose Fubini–Study
//! squared norm is `(1 + ‖w‖²)^{-(p+d_j)}`. For torus-invariant metrics this
//! makes `|w^α|²` times the frame weight equal to `t^α` in moment
//! coordinates, and distinct exponents are orthogonal, so the Gram matrix is
//! block diagonal with one block per exponent.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::forms::binomial;
use crate::jet::{checked_inverse, JetScalar, MatrixJet, MixedJet2, C64, ONE, ZERO};
use crate::model::{fs_weight_jet, ChartPoint, ModelSpace};
use crate::quadrature::{integrate, QuadratureRule};
use crate::rng::{complex_gaussians, stream};
use crate::stats::{mean_se, pairwise_sum, pairwise_sum_c};

/// Condition bound for a constant twist matrix.
pub const CONSTANT_TWIST_CONDITION_LIMIT: f64 = 1e8;

/// A smooth torus-invariant real function of the moment coordinates
/// `(t_0, …, t_n)`.
#[derive(Debug, Clone, PartialEq)]
pub enum TorusFn {
    Zero,
    /// `Σ_k c_k t_k`.
    Linear(Vec<f64>),
    /// `amplitude · exp(−Σ_k (t_k − center_k)² / width²)`.
    Bump {
        center: Vec<f64>,
        width: f64,
        amplitude: f64,
    },
    Sum(Vec<TorusFn>),
}

impl TorusFn {
    pub fn eval<S: JetScalar>(&self, t: &[S]) -> S {
        let zero = t[0].real_const(0.0);
        match self {
            TorusFn::Zero => zero,
            TorusFn::Linear(c) => t
                .iter()
                .zip(c)
                .fold(zero, |acc, (tk, ck)| acc + tk.scale(C64::new(*ck, 0.0))),
            TorusFn::Bump {
                center,
                width,
                amplitude,
            } => {
                let mut q = zero;
                for (tk, ck) in t.iter().zip(center) {
                    let d = tk.clone() - tk.real_const(*ck);
                    q = q + d.clone() * d;
                }
                q.scale(C64::new(-1.0 / (width * width), 0.0))
                    .exp()
                    .scale(C64::new(*amplitude, 0.0))
            }
            TorusFn::Sum(parts) => parts.iter().fold(zero, |acc, f| acc + f.eval(t)),
        }
    }

    pub fn value(&self, t: &[f64]) -> f64 {
        let tc: Vec<C64> = t.iter().map(|x| C64::new(*x, 0.0)).collect();
        self.eval(&tc).re
    }

    pub fn is_zero(&self) -> bool {
        match self {
            TorusFn::Zero => true,
            TorusFn::Sum(parts) => parts.iter().all(|p| p.is_zero()),
            TorusFn::Linear(c) => c.iter().all(|x| *x == 0.0),
            TorusFn::Bump { amplitude, .. } => *amplitude == 0.0,
        }
    }

    /// A bump with random center in the simplex, width in `[0.3, 0.6]` and
    /// amplitude in `[-0.5, 0.5]`.
    pub fn random_bump<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let raw: Vec<f64> = (0..=n).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
        let s: f64 = raw.iter().sum();
        TorusFn::Bump {
            center: raw.iter().map(|x| x / s).collect(),
            width: 0.3 + 0.3 * rng.random::<f64>(),
            amplitude: rng.random::<f64>() - 0.5,
        }
    }
}

/// Metric on `E` relative to the Fubini–Study metrics of the summands.
#[derive(Debug, Clone, PartialEq)]
pub enum Twist {
    None,
    /// Summand `j` carries the extra factor `e^{−ψ_j}`.
    Conformal(Vec<TorusFn>),
    /// Equal degrees only: the frame matrix is `φ^d (A₀ + f(t) A₁)`.
    Matrix {
        base: DMatrix<C64>,
        direction: DMatrix<C64>,
        profile: TorusFn,
    },
    /// Equal degrees only: `h(u, v) = ⟨A⁻¹u, v⟩`, frame matrix `φ^d A⁻¹`.
    Constant(DMatrix<C64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleSpec {
    pub space: ModelSpace,
    pub p: u32,
    pub degrees: Vec<u32>,
    pub twist: Twist,
    /// The metric on `L = O(1)` is `h_FS · e^{−χ}`; `χ = 0` is prequantum.
    pub line_twist: TorusFn,
    /// Allows rank above the dimension (determinant and covariance setups).
    pub high_rank: bool,
}

impl BundleSpec {
    pub fn new(space: ModelSpace, p: u32, degrees: Vec<u32>) -> Self {
        Self {
            space,
            p,
            degrees,
            twist: Twist::None,
            line_twist: TorusFn::Zero,
            high_rank: false,
        }
    }

    pub fn with_twist(mut self, twist: Twist) -> Self {
        self.twist = twist;
        self
    }

    pub fn with_line_twist(mut self, chi: TorusFn) -> Self {
        self.line_twist = chi;
        self
    }

    pub fn allow_high_rank(mut self) -> Self {
        self.high_rank = true;
        self
    }

    pub fn with_p(&self, p: u32) -> Self {
        let mut s = self.clone();
        s.p = p;
        s
    }

    pub fn rank(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_prequantum(&self) -> bool {
        self.line_twist.is_zero()
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.rank();
        if self.p < 1 {
            return Err(LabError::Rejected("p must be at least 1".into()));
        }
        if r == 0 {
            return Err(LabError::Rejected("bundle needs at least one summand".into()));
        }
        if r > self.space.n() && !self.high_rank {
            return Err(LabError::Rejected(format!(
                "rank {r} exceeds dimension {} without the high-rank flag",
                self.space.n()
            )));
        }
        let equal = self.degrees.iter().all(|d| *d == self.degrees[0]);
        match &self.twist {
            Twist::None => {}
            Twist::Conformal(psi) => {
                if psi.len() != r {
                    return Err(LabError::DimensionMismatch {
                        expected: r,
                        got: psi.len(),
                    });
                }
            }
            Twist::Matrix {
                base, direction, ..
            } => {
                if !equal {
                    return Err(LabError::Rejected(
                        "matrix twists need equal summand degrees".into(),
                    ));
                }
                for m in [base, direction] {
                    if m.shape() != (r, r) {
                        return Err(LabError::DimensionMismatch {
                            expected: r,
                            got: m.nrows(),
                        });
                    }
                    if (m - m.adjoint()).norm() > 1e-14 * (1.0 + m.norm()) {
                        return Err(LabError::Rejected("twist matrices must be Hermitian".into()));
                    }
                }
                if base.clone().cholesky().is_none() {
                    return Err(LabError::Rejected("twist base must be positive definite".into()));
                }
            }
            Twist::Constant(a) => {
                if !equal {
                    return Err(LabError::Rejected(
                        "constant twists need equal summand degrees".into(),
                    ));
                }
                if a.shape() != (r, r) {
                    return Err(LabError::DimensionMismatch {
                        expected: r,
                        got: a.nrows(),
                    });
                }
                if (a - a.adjoint()).norm() > 1e-14 * (1.0 + a.norm()) || a.clone().cholesky().is_none() {
                    return Err(LabError::Rejected(
                        "constant twist must be Hermitian positive definite".into(),
                    ));
                }
                checked_inverse(a, CONSTANT_TWIST_CONDITION_LIMIT).map_err(|e| {
                    LabError::Rejected(format!("degenerate constant twist: {e}"))
                })?;
            }
        }
        Ok(())
    }

    /// `Σ_j binom(n + p + d_j, n)`.
    pub fn dimension(&self) -> usize {
        let n = self.space.n();
        self.degrees
            .iter()
            .map(|d| binomial(n + (self.p + d) as usize, n))
            .sum()
    }

    /// The torus-invariant factor of the frame matrix of `E`, as a function of
    /// the moment coordinates.
    pub fn e_profile<S: JetScalar>(&self, t: &[S]) -> Vec<Vec<S>> {
        let r = self.rank();
        let zero = t[0].real_const(0.0);
        let mut out = vec![vec![zero.clone(); r]; r];
        match &self.twist {
            Twist::None => {
                for (j, row) in out.iter_mut().enumerate() {
                    row[j] = t[0].real_const(1.0);
                }
            }
            Twist::Conformal(psi) => {
                for (j, row) in out.iter_mut().enumerate() {
                    row[j] = (-psi[j].eval(t)).exp();
                }
            }
            Twist::Matrix {
                base,
                direction,
                profile,
            } => {
                let f = profile.eval(t);
                for j in 0..r {
                    for k in 0..r {
                        out[j][k] = t[0].constant_like(base[(j, k)]) + f.scale(direction[(j, k)]);
                    }
                }
            }
            Twist::Constant(a) => {
                let inv = a.clone().try_inverse().expect("validated twist");
                for j in 0..r {
                    for k in 0..r {
                        out[j][k] = t[0].constant_like(inv[(j, k)]);
                    }
                }
            }
        }
        out
    }

    /// Frame weight of `(L, h)`: `φ_FS · e^{−χ}`.
    pub fn line_weight(&self, x: &ChartPoint) -> MixedJet2 {
        let phi = fs_weight_jet(x);
        if self.line_twist.is_zero() {
            return phi;
        }
        let chi = self.line_twist.eval(&x.moment_jets());
        &phi * &(-chi).exp()
    }

    /// Frame matrix of `(E, h^E)` at `x`.
    pub fn e_metric(&self, x: &ChartPoint) -> MatrixJet {
        let t = x.moment_jets();
        let prof = self.e_profile(&t);
        let phi = fs_weight_jet(x);
        let r = self.rank();
        let mut h = MatrixJet::constant(DMatrix::zeros(r, r), x.n());
        for j in 0..r {
            for k in 0..r {
                if j != k && self.degrees[j] != self.degrees[k] {
                    continue;
                }
                let scale = phi.powi((self.degrees[j] + self.degrees[k]) / 2);
                h.set_entry(j, k, &(&prof[j][k] * &scale));
            }
        }
        h
    }

    /// Frame matrix of `(L^p ⊗ E, h)` at `x`.
    pub fn full_metric(&self, x: &ChartPoint) -> Result<MatrixJet> {
        self.e_metric(x).scale_by(&self.line_weight(x).powi(self.p))
    }

    fn full_profile_value(&self, t: &[f64]) -> DMatrix<C64> {
        let tc: Vec<C64> = t.iter().map(|x| C64::new(*x, 0.0)).collect();
        let prof = self.e_profile(&tc);
        let r = self.rank();
        let line = (-self.line_twist.value(t) * self.p as f64).exp();
        DMatrix::from_fn(r, r, |j, k| prof[j][k] * line)
    }
}

/// Exponent vectors of total degree `q` in `n + 1` variables, lexicographic.
pub fn exponents(n: usize, q: u32) -> Vec<Vec<u32>> {
    fn rec(vars: usize, q: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if vars == 1 {
            cur.push(q);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for a in 0..=q {
            cur.push(a);
            rec(vars - 1, q - a, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n + 1, q, &mut Vec::new(), &mut out);
    out
}

/// One basis element: a monomial in one summand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisLabel {
    pub summand: usize,
    pub exponent: Vec<u32>,
}

/// A diagonal block of the Gram matrix with its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GramBlock {
    pub indices: Vec<usize>,
    pub gram: DMatrix<C64>,
    pub chol: DMatrix<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectionCoeffs(pub DVector<C64>);

#[derive(Debug, Clone)]
pub struct SectionSpace {
    pub spec: BundleSpec,
    pub basis: Vec<BasisLabel>,
    pub blocks: Vec<GramBlock>,
}

/// Lower Cholesky factor with the failing pivot reported by `labels`.
pub fn cholesky_with_pivots(g: &DMatrix<C64>, labels: &[usize]) -> Result<DMatrix<C64>> {
    let n = g.nrows();
    let mut l = DMatrix::<C64>::zeros(n, n);
    for j in 0..n {
        let mut d = g[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d.is_finite() && d > 0.0) {
            return Err(LabError::GramNotPositive {
                pivot: labels.get(j).copied().unwrap_or(j),
                value: d,
            });
        }
        let djj = d.sqrt();
        l[(j, j)] = C64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = g[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

impl SectionSpace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn rank(&self) -> usize {
        self.spec.rank()
    }

    pub fn n(&self) -> usize {
        self.spec.space.n()
    }

    /// Dense Gram matrix `G_ab = (m_b, m_a)`, so that `‖Σ c_a m_a‖² = c* G c`.
    pub fn gram(&self) -> DMatrix<C64> {
        let d = self.dim();
        let mut g = DMatrix::zeros(d, d);
        for b in &self.blocks {
            for (i, &gi) in b.indices.iter().enumerate() {
                for (j, &gj) in b.indices.iter().enumerate() {
                    g[(gi, gj)] = b.gram[(i, j)];
                }
            }
        }
        g
    }

    /// Lower-triangular `T` with `T G T* = I`; orthonormal sections have
    /// coefficient vectors given by the columns of `T*`.
    pub fn orthonormalizer(&self) -> DMatrix<C64> {
        let d = self.dim();
        let mut t = DMatrix::zeros(d, d);
        for b in &self.blocks {
            let inv = b.chol.clone().try_inverse().expect("positive pivots");
            for (i, &gi) in b.indices.iter().enumerate() {
                for (j, &gj) in b.indices.iter().enumerate() {
                    t[(gi, gj)] = inv[(i, j)];
                }
            }
        }
        t
    }

    /// Monomial values and holomorphic derivatives in the chart of `x`:
    /// `M` is `r × dim` with column `a` the vector value of basis element `a`.
    pub fn monomial_matrix(&self, x: &ChartPoint) -> (DMatrix<C64>, Vec<DMatrix<C64>>) {
        let n = self.n();
        let r = self.rank();
        let d = self.dim();
        let mut m = DMatrix::zeros(r, d);
        let mut dm = vec![DMatrix::zeros(r, d); n];
        // Powers of chart coordinates up to the largest degree.
        let qmax = self
            .spec
            .degrees
            .iter()
            .map(|dj| self.spec.p + dj)
            .max()
            .unwrap_or(0) as usize;
        let pows: Vec<Vec<C64>> = x
            .z
            .iter()
            .map(|w| {
                let mut v = Vec::with_capacity(qmax + 1);
                let mut acc = ONE;
                for _ in 0..=qmax {
                    v.push(acc);
                    acc *= w;
                }
                v
            })
            .collect();
        for (col, label) in self.basis.iter().enumerate() {
            let e: Vec<usize> = (0..n)
                .map(|a| label.exponent[x.homogeneous_index(a)] as usize)
                .collect();
            let value: C64 = (0..n).map(|a| pows[a][e[a]]).product();
            m[(label.summand, col)] = value;
            for a in 0..n {
                if e[a] == 0 {
                    continue;
                }
                let mut v = C64::new(e[a] as f64, 0.0);
                for b in 0..n {
                    v *= if b == a { pows[b][e[b] - 1] } else { pows[b][e[b]] };
                }
                dm[a][(label.summand, col)] = v;
            }
        }
        (m, dm)
    }

    /// Right-multiply a `k × dim` matrix by `T*`, block by block.
    pub fn apply_orthonormalizer_adjoint(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for b in &self.blocks {
            let sub = DMatrix::from_fn(m.nrows(), b.indices.len(), |i, j| m[(i, b.indices[j])]);
            // X = sub · L^{-*}  ⇔  L Xᵀ... solved as (L X*)* = sub*.
            let x = b
                .chol
                .solve_lower_triangular(&sub.adjoint())
                .expect("positive pivots")
                .adjoint();
            for (j, &gj) in b.indices.iter().enumerate() {
                for i in 0..m.nrows() {
                    out[(i, gj)] = x[(i, j)];
                }
            }
        }
        out
    }

    /// Values and derivatives of an orthonormal basis at `x`.
    pub fn orthonormal_frame(&self, x: &ChartPoint) -> (DMatrix<C64>, Vec<DMatrix<C64>>) {
        let (m, dm) = self.monomial_matrix(x);
        (
            self.apply_orthonormalizer_adjoint(&m),
            dm.iter().map(|d| self.apply_orthonormalizer_adjoint(d)).collect(),
        )
    }

    /// Per-summand holomorphic jets of the section `coeffs` at `x`.
    pub fn evaluate_section_jet(&self, coeffs: &SectionCoeffs, x: &ChartPoint) -> Vec<MixedJet2> {
        let (m, dm) = self.monomial_matrix(x);
        let v = &m * &coeffs.0;
        let dv: Vec<DVector<C64>> = dm.iter().map(|d| d * &coeffs.0).collect();
        (0..self.rank())
            .map(|j| {
                let mut jet = MixedJet2::constant(v[j], self.n());
                for a in 0..self.n() {
                    jet.d[a] = dv[a][j];
                }
                jet
            })
            .collect()
    }

    pub fn evaluate_section(&self, coeffs: &SectionCoeffs, x: &ChartPoint) -> DVector<C64> {
        self.monomial_matrix(x).0 * &coeffs.0
    }

    /// `|s(x)|²` in the metric of `L^p ⊗ E`.
    pub fn pointwise_norm_sq(&self, coeffs: &SectionCoeffs, x: &ChartPoint) -> Result<f64> {
        let v = self.evaluate_section(coeffs, x);
        let h = self.spec.full_metric(x)?.value;
        Ok((v.adjoint() * h * v)[(0, 0)].re)
    }

    /// `‖s‖²_{L²} = c* G c`.
    pub fn l2_norm_sq(&self, coeffs: &SectionCoeffs) -> f64 {
        let mut acc = 0.0;
        for b in &self.blocks {
            let c = DVector::from_fn(b.indices.len(), |i, _| coeffs.0[b.indices[i]]);
            acc += (c.adjoint() * &b.gram * &c)[(0, 0)].re;
        }
        acc
    }

    /// Coordinates of `coeffs` in the orthonormal basis: `L* c` per block.
    pub fn orthonormal_coordinates(&self, coeffs: &SectionCoeffs) -> DVector<C64> {
        let mut out = DVector::zeros(self.dim());
        for b in &self.blocks {
            let c = DVector::from_fn(b.indices.len(), |i, _| coeffs.0[b.indices[i]]);
            let u = b.chol.adjoint() * c;
            for (i, &gi) in b.indices.iter().enumerate() {
                out[gi] = u[i];
            }
        }
        out
    }

    /// Coefficients of `Σ_k u_k e_k` for orthonormal coordinates `u`.
    pub fn from_orthonormal(&self, u: &DVector<C64>) -> SectionCoeffs {
        let mut out = DVector::zeros(self.dim());
        for b in &self.blocks {
            let ub = DVector::from_fn(b.indices.len(), |i, _| u[b.indices[i]]);
            let c = b
                .chol
                .adjoint()
                .solve_upper_triangular(&ub)
                .expect("positive pivots");
            for (i, &gi) in b.indices.iter().enumerate() {
                out[gi] = c[i];
            }
        }
        SectionCoeffs(out)
    }
}

/// Build `H⁰(X, L^p ⊗ E)` with its block Gram matrix from moment integrals.
pub fn build_space(spec: &BundleSpec, rule: &QuadratureRule) -> Result<SectionSpace> {
    spec.validate()?;
    if rule.space != spec.space {
        return Err(LabError::Rejected("quadrature rule is for a different space".into()));
    }
    let n = spec.space.n();
    let mut basis = Vec::new();
    for (j, d) in spec.degrees.iter().enumerate() {
        for e in exponents(n, spec.p + d) {
            basis.push(BasisLabel {
                summand: j,
                exponent: e,
            });
        }
    }
    // Group basis elements sharing an exponent and a total degree.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, label) in basis.iter().enumerate() {
        let coupled = |g: &Vec<usize>| {
            let other = &basis[g[0]];
            other.exponent == label.exponent
                && spec.degrees[other.summand] == spec.degrees[label.summand]
                && !matches!(spec.twist, Twist::None | Twist::Conformal(_))
        };
        match groups.iter_mut().find(|g| coupled(g)) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    let simplex = rule.simplex_nodes();
    let profiles: Vec<DMatrix<C64>> = simplex.iter().map(|(t, _)| spec.full_profile_value(t)).collect();
    let blocks: Result<Vec<GramBlock>> = groups
        .into_par_iter()
        .map(|indices| {
            let k = indices.len();
            let exponent = &basis[indices[0]].exponent;
            let mut gram = DMatrix::zeros(k, k);
            for i in 0..k {
                for j in 0..k {
                    let (si, sj) = (basis[indices[i]].summand, basis[indices[j]].summand);
                    let terms: Vec<C64> = simplex
                        .iter()
                        .zip(&profiles)
                        .map(|((t, w), prof)| {
                            let mono: f64 = t
                                .iter()
                                .zip(exponent)
                                .map(|(tk, a)| tk.powi(*a as i32))
                                .product();
                            prof[(si, sj)] * (w * mono)
                        })
                        .collect();
                    gram[(i, j)] = pairwise_sum_c(&terms);
                }
            }
            let chol = cholesky_with_pivots(&gram, &indices)?;
            Ok(GramBlock {
                indices,
                gram,
                chol,
            })
        })
        .collect();
    let mut blocks = blocks?;
    blocks.sort_by_key(|b| b.indices[0]);
    Ok(SectionSpace {
        spec: spec.clone(),
        basis,
        blocks,
    })
}

/// The Gram matrix `∫ m_a* H m_b ω^n/n!` over the full product rule, valid
/// for any metric; the block construction must agree with it.
pub fn gram_by_full_quadrature(space: &SectionSpace, rule: &QuadratureRule) -> Result<DMatrix<C64>> {
    let d = space.dim();
    let mut g = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            g[(a, b)] = integrate(
                |x| {
                    let (m, _) = space.monomial_matrix(x);
                    let h = space.spec.full_metric(x).expect("valid metric").value;
                    (m.column(a).adjoint() * h * m.column(b))[(0, 0)]
                },
                rule,
            )?;
        }
    }
    Ok(g)
}

/// Standard Gaussian section for the L² inner product of `space`.
pub fn sample_gaussian_section<R: Rng + ?Sized>(space: &SectionSpace, rng: &mut R) -> SectionCoeffs {
    let u = DVector::from_vec(complex_gaussians(rng, space.dim()));
    space.from_orthonormal(&u)
}

/// A point of the unit sphere of `(V_p, L²)`; its class in `P V_p` is
/// distributed by the Fubini–Study volume.
pub fn sample_fs_section<R: Rng + ?Sized>(space: &SectionSpace, rng: &mut R) -> SectionCoeffs {
    let u = DVector::from_vec(complex_gaussians(rng, space.dim()));
    let norm = u.norm();
    space.from_orthonormal(&(u / C64::new(norm, 0.0)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalCheck {
    pub component: usize,
    /// Mean of `‖s_j‖²_p / n_p`, expected `a_jj`.
    pub mean: f64,
    pub mean_se: f64,
    /// Sample variance of `‖s_j‖²_p`, expected `n_p a_jj²`.
    pub variance: f64,
    pub variance_se: f64,
    pub expected_mean: f64,
    pub expected_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceReport {
    pub n_p: usize,
    pub samples: usize,
    /// Mean of `(s_j, s_l)_p`.
    pub estimate: DMatrix<C64>,
    pub se_re: DMatrix<f64>,
    pub se_im: DMatrix<f64>,
    pub marginals: Vec<MarginalCheck>,
}

/// Monte Carlo estimate of `E[(s_j, s_l)_p]` for Gaussian sections of
/// `L^p ⊗ C^r` with the constant twist `A`, using the untwisted scalar inner
/// product on components.
pub fn covariance_experiment(
    space: &SectionSpace,
    samples: usize,
    seed: u64,
    label: &str,
) -> Result<CovarianceReport> {
    let Twist::Constant(_) = &space.spec.twist else {
        return Err(LabError::Rejected(
            "covariance experiment needs a constant twist".into(),
        ));
    };
    if samples < 2 {
        return Err(LabError::Rejected("need at least two samples".into()));
    }
    let r = space.rank();
    // Scalar Gram g_α for each exponent: the untwisted inner product.
    let scalar_spec = BundleSpec::new(space.spec.space, space.spec.p, vec![space.spec.degrees[0]])
        .with_line_twist(space.spec.line_twist.clone());
    let n_p = scalar_spec.dimension();
    let scalar_rule = QuadratureRule::new(
        space.spec.space,
        (space.spec.p as usize + space.spec.degrees[0] as usize) / 2 + 16,
        1,
    )?;
    let scalar = build_space(&scalar_spec, &scalar_rule)?;
    let scalar_gram: Vec<f64> = scalar.blocks.iter().map(|b| b.gram[(0, 0)].re).collect();
    let exps: Vec<&Vec<u32>> = scalar.basis.iter().map(|b| &b.exponent).collect();
    let position = |label: &BasisLabel| exps.iter().position(|e| **e == label.exponent).unwrap();

    let draws: Vec<DMatrix<C64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, label, i as u64);
            let s = sample_gaussian_section(space, &mut rng);
            let mut comps = vec![vec![ZERO; n_p]; r];
            for (idx, lab) in space.basis.iter().enumerate() {
                comps[lab.summand][position(lab)] = s.0[idx];
            }
            DMatrix::from_fn(r, r, |j, l| {
                (0..n_p)
                    .map(|a| comps[j][a] * comps[l][a].conj() * scalar_gram[a])
                    .sum()
            })
        })
        .collect();

    let mut estimate = DMatrix::zeros(r, r);
    let mut se_re = DMatrix::zeros(r, r);
    let mut se_im = DMatrix::zeros(r, r);
    for j in 0..r {
        for l in 0..r {
            let re: Vec<f64> = draws.iter().map(|d| d[(j, l)].re).collect();
            let im: Vec<f64> = draws.iter().map(|d| d[(j, l)].im).collect();
            let (mr, mi) = (mean_se(&re), mean_se(&im));
            estimate[(j, l)] = C64::new(mr.mean, mi.mean);
            se_re[(j, l)] = mr.se;
            se_im[(j, l)] = mi.se;
        }
    }
    let a = match &space.spec.twist {
        Twist::Constant(a) => a.clone(),
        _ => unreachable!(),
    };
    let marginals = (0..r)
        .map(|j| {
            let norms: Vec<f64> = draws.iter().map(|d| d[(j, j)].re).collect();
            let scaled: Vec<f64> = norms.iter().map(|x| x / n_p as f64).collect();
            let m = mean_se(&scaled);
            let mu = mean_se(&norms).mean;
            let centered2: Vec<f64> = norms.iter().map(|x| (x - mu).powi(2)).collect();
            let var = pairwise_sum(&centered2) / (samples - 1) as f64;
            let centered4: Vec<f64> = norms.iter().map(|x| (x - mu).powi(4)).collect();
            let m4 = pairwise_sum(&centered4) / samples as f64;
            let ajj = a[(j, j)].re;
            MarginalCheck {
                component: j,
                mean: m.mean,
                mean_se: m.se,
                variance: var,
                variance_se: ((m4 - var * var).max(0.0) / samples as f64).sqrt(),
                expected_mean: ajj,
                expected_variance: n_p as f64 * ajj * ajj,
            }
        })
        .collect();
    Ok(CovarianceReport {
        n_p,
        samples,
        estimate,
        se_re,
        se_im,
        marginals,
    })
}
