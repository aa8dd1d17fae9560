//! Zeros of sections of `O(q)` on CP^1 and common zeros of pairs on CP^2.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{LabError, Result};
use crate::jet::{C64, ONE, ZERO};
use crate::model::ChartPoint;
use crate::poly::{horner_with_derivative, HomPoly};
use crate::rng::complex_gaussians;
use crate::stats::sup;

/// Residual above which a polished root is reported as suspect.
pub const ROOT_RESIDUAL_WARNING: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RootSet {
    pub roots: Vec<ChartPoint>,
    /// Largest [`HomPoly::normalized_residual`] over the roots.
    pub max_residual: f64,
    pub warning: Option<String>,
}

/// Parlett–Reinsch balancing by powers of two.
fn balance(m: &mut DMatrix<C64>) {
    let n = m.nrows();
    let radix = 2.0_f64;
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].norm();
                    r += m[(i, j)].norm();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut cc = c;
            let rr = r;
            while cc < rr / radix {
                cc *= radix * radix;
                f *= radix;
            }
            while cc >= rr * radix {
                cc /= radix * radix;
                f /= radix;
            }
            if (c * f * f + r) / f < 0.95 * s {
                converged = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

/// Roots of `Σ c_j z^j` with `c_0 ≠ 0 ≠ c_d`, from the balanced companion
/// matrix of the geometrically rescaled polynomial.
fn companion_roots(core: &[C64]) -> Result<Vec<C64>> {
    let d = core.len() - 1;
    if d == 0 {
        return Ok(Vec::new());
    }
    let rho = (core[0].norm() / core[d].norm()).powf(1.0 / d as f64);
    let scaled: Vec<C64> = core
        .iter()
        .enumerate()
        .map(|(j, c)| c * rho.powi(j as i32 - d as i32) / core[d])
        .collect();
    let mut m = DMatrix::from_element(d, d, ZERO);
    for i in 1..d {
        m[(i, i - 1)] = ONE;
    }
    for i in 0..d {
        m[(i, d - 1)] = -scaled[i];
    }
    balance(&mut m);
    let ev = m
        .eigenvalues()
        .ok_or_else(|| LabError::Evaluation("companion eigenvalues did not converge".into()))?;
    Ok(ev.iter().map(|w| w * rho).collect())
}

/// Newton steps on `p` (if `|z| ≤ 1`) or on the reversed polynomial in
/// `1/z`, keeping only steps that reduce the residual.
fn polish(core: &[C64], reversed: &[C64], z: C64, steps: usize) -> C64 {
    let inside = z.norm() <= 1.0;
    let (poly, mut x) = if inside { (core, z) } else { (reversed, ONE / z) };
    let (mut v, mut d) = horner_with_derivative(poly, x);
    for _ in 0..steps {
        if v == ZERO || d == ZERO {
            break;
        }
        let next = x - v / d;
        let (nv, nd) = horner_with_derivative(poly, next);
        if !(nv.norm() < v.norm()) {
            break;
        }
        x = next;
        v = nv;
        d = nd;
    }
    if inside {
        x
    } else {
        ONE / x
    }
}

fn cp1_point(z: C64) -> ChartPoint {
    if z.norm() <= 1.0 {
        ChartPoint { chart: 0, z: vec![z] }
    } else {
        ChartPoint {
            chart: 1,
            z: vec![ONE / z],
        }
    }
}

fn finite_nonzero_roots(core: &[C64]) -> Result<Vec<C64>> {
    let reversed: Vec<C64> = core.iter().rev().copied().collect();
    Ok(companion_roots(core)?
        .into_iter()
        .map(|z| polish(core, &reversed, z, 8))
        .collect())
}

/// All `q` roots of the section `Σ c_j Z_0^{q−j} Z_1^j` of `O(q)`, with
/// multiplicity, including roots at `Z_0 = 0`.
pub fn roots_on_cp1(c: &[C64]) -> Result<RootSet> {
    let lo = c
        .iter()
        .position(|x| *x != ZERO)
        .ok_or_else(|| LabError::Rejected("identically zero section has no isolated zeros".into()))?;
    let hi = c.iter().rposition(|x| *x != ZERO).expect("some nonzero coefficient");
    let q = c.len() - 1;
    let mut roots: Vec<ChartPoint> = Vec::with_capacity(q);
    roots.extend((0..lo).map(|_| ChartPoint { chart: 0, z: vec![ZERO] }));
    roots.extend((hi..q).map(|_| ChartPoint { chart: 1, z: vec![ZERO] }));
    roots.extend(finite_nonzero_roots(&c[lo..=hi])?.into_iter().map(cp1_point));
    let f = HomPoly::from_univariate(c);
    let max_residual = sup(roots.iter().map(|x| f.normalized_residual(x)));
    let warning = (max_residual > ROOT_RESIDUAL_WARNING)
        .then(|| format!("largest root residual {max_residual:.3e} after polishing"));
    Ok(RootSet {
        roots,
        max_residual,
        warning,
    })
}

/// Unitary matrix from the QR factorization of a complex Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<C64> {
    let g = DMatrix::from_vec(dim, dim, complex_gaussians(rng, dim * dim));
    let qr = g.qr();
    let (q, r) = qr.unpack();
    // Fix the phases so the law is Haar.
    let phases = DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            let d = r[(i, i)];
            if d.norm() > 0.0 {
                d / d.norm()
            } else {
                ONE
            }
        } else {
            ZERO
        }
    });
    q * phases
}

/// Sylvester matrix of `Σ f_i τ^i` and `Σ g_i τ^i` with formal degrees
/// `len − 1`.
pub fn sylvester(f: &[C64], g: &[C64]) -> DMatrix<C64> {
    let df = f.len() - 1;
    let dg = g.len() - 1;
    let size = df + dg;
    let mut s = DMatrix::from_element(size, size, ZERO);
    for row in 0..dg {
        for (i, c) in f.iter().rev().enumerate() {
            s[(row, row + i)] = *c;
        }
    }
    for row in 0..df {
        for (i, c) in g.iter().rev().enumerate() {
            s[(dg + row, row + i)] = *c;
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommonZeros {
    pub roots: Vec<ChartPoint>,
    /// Largest normalized residual of either equation.
    pub max_residual: f64,
    /// Smallest chordal distance between two returned roots.
    pub min_separation: f64,
    pub iterations: usize,
    /// Whether the elimination iteration met its step tolerance; the
    /// polished roots are judged by residual either way.
    pub converged: bool,
}

impl CommonZeros {
    /// Bézout count reached with distinct, accurate roots.
    pub fn is_complete(&self, expected: usize) -> bool {
        self.roots.len() == expected
            && self.max_residual < ROOT_RESIDUAL_WARNING
            && (expected < 2 || self.min_separation > 1e-8)
    }
}

/// `sin` of the Fubini–Study distance between two points.
pub fn chordal_distance(x: &ChartPoint, y: &ChartPoint) -> f64 {
    let u = x.homogeneous();
    let v = y.homogeneous();
    let nu: f64 = u.iter().map(|w| w.norm_sqr()).sum();
    let nv: f64 = v.iter().map(|w| w.norm_sqr()).sum();
    let ip: C64 = u.iter().zip(&v).map(|(a, b)| a * b.conj()).sum();
    (1.0 - ip.norm_sqr() / (nu * nv)).max(0.0).sqrt()
}

/// The rotated pair in the hidden-variable form `Σ_j F_j(w_1) w_2^j`.
struct Elimination {
    f: Vec<Vec<C64>>,
    g: Vec<Vec<C64>>,
}

fn column(parts: &[Vec<C64>], w1: C64) -> (Vec<C64>, Vec<C64>) {
    parts.iter().map(|c| horner_with_derivative(c, w1)).unzip()
}

impl Elimination {
    /// Sylvester matrix in `w_2` and its `w_1`-derivative.
    fn matrices(&self, w1: C64) -> (DMatrix<C64>, DMatrix<C64>) {
        let (fv, fd) = column(&self.f, w1);
        let (gv, gd) = column(&self.g, w1);
        (sylvester(&fv, &gv), sylvester(&fd, &gd))
    }

    /// `R / R'` for the resultant `R(w_1) = det S(w_1)`.
    fn newton_ratio(&self, w1: C64) -> C64 {
        let (s, ds) = self.matrices(w1);
        match s.lu().solve(&ds) {
            Some(x) => {
                let t = x.trace();
                if t == ZERO {
                    ZERO
                } else {
                    ONE / t
                }
            }
            None => ZERO,
        }
    }

    fn reciprocal_condition(&self, w1: C64) -> f64 {
        let (s, _) = self.matrices(w1);
        let sv = s.singular_values();
        let max = sv.max();
        if max == 0.0 {
            0.0
        } else {
            sv.min() / max
        }
    }
}

/// Simultaneous Aberth iteration for the `degree` roots of a polynomial
/// given only through its Newton ratio.
fn aberth(degree: usize, ratio: &dyn Fn(C64) -> C64, max_iter: usize) -> (Vec<C64>, usize, bool) {
    let mut z: Vec<C64> = (0..degree)
        .map(|i| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * (i as f64 + 0.25) / degree as f64 + 0.4))
        .collect();
    let mut done = vec![false; degree];
    for it in 0..max_iter {
        let mut all = true;
        for i in 0..degree {
            if done[i] {
                continue;
            }
            let n = ratio(z[i]);
            let s: C64 = (0..degree)
                .filter(|j| *j != i)
                .map(|j| ONE / (z[i] - z[j]))
                .sum();
            let step = n / (ONE - n * s);
            z[i] -= step;
            if step.norm() <= 1e-11 * (1.0 + z[i].norm()) {
                done[i] = true;
            } else {
                all = false;
            }
        }
        if all {
            return (z, it + 1, true);
        }
    }
    (z, max_iter, false)
}

/// Newton's method on the `2 × 2` system in the best chart of `x`.
fn polish_pair(f: &HomPoly, g: &HomPoly, x: ChartPoint, steps: usize) -> ChartPoint {
    let score = |p: &ChartPoint| f.normalized_residual(p).max(g.normalized_residual(p));
    let mut x = x.to_best_chart();
    let mut best = score(&x);
    for _ in 0..steps {
        let (fv, fg) = f.eval_chart(&x);
        let (gv, gg) = g.eval_chart(&x);
        let det = fg[0] * gg[1] - fg[1] * gg[0];
        if det == ZERO {
            break;
        }
        let d0 = (fv * gg[1] - gv * fg[1]) / det;
        let d1 = (gv * fg[0] - fv * gg[0]) / det;
        let Ok(next) = ChartPoint::new(x.chart, vec![x.z[0] - d0, x.z[1] - d1]) else {
            break;
        };
        let next = next.to_best_chart();
        let s = score(&next);
        if !(s < best) {
            break;
        }
        best = s;
        x = next;
    }
    x
}

/// All common zeros of two sections of `O(q_1)` and `O(q_2)` on CP^2.
///
/// The coordinates are first rotated by a random unitary, then `w_2` is
/// eliminated through the Sylvester resultant, whose roots in `w_1` come
/// from an Aberth iteration driven by `tr(S⁻¹ S')`.
pub fn common_zeros_cp2<R: Rng + ?Sized>(f: &HomPoly, g: &HomPoly, rng: &mut R) -> Result<CommonZeros> {
    if f.n != 2 || g.n != 2 {
        return Err(LabError::Unsupported {
            requested: format!("common zeros on CP^{} and CP^{}", f.n, g.n),
            supported: "CP^2".into(),
        });
    }
    if f.is_zero() || g.is_zero() {
        return Err(LabError::DegenerateSample("a section vanishes identically".into()));
    }
    let degree = (f.q * g.q) as usize;
    if degree == 0 {
        return Ok(CommonZeros {
            roots: Vec::new(),
            max_residual: 0.0,
            min_separation: f64::INFINITY,
            iterations: 0,
            converged: true,
        });
    }
    let u = random_unitary(3, rng);
    let elim = Elimination {
        f: f.compose_linear(&u).hidden_variable_form(),
        g: g.compose_linear(&u).hidden_variable_form(),
    };
    let probes = complex_gaussians(rng, 3);
    if probes.iter().all(|w| elim.reciprocal_condition(*w) < 1e-13) {
        return Err(LabError::DegenerateSample("resultant vanishes identically".into()));
    }
    let (w1s, iterations, converged) = aberth(degree, &|w| elim.newton_ratio(w), 500);
    let mut roots = Vec::with_capacity(degree);
    for w1 in w1s {
        let (fv, _) = column(&elim.f, w1);
        let point_at = |tau: C64| {
            let z: Vec<C64> = (0..3)
                .map(|k| u[(k, 0)] + u[(k, 1)] * w1 + u[(k, 2)] * tau)
                .collect();
            ChartPoint::best_from_homogeneous(&z)
        };
        let mut best: Option<(f64, ChartPoint)> = None;
        let lo = fv.iter().position(|x| *x != ZERO);
        let taus = match lo {
            Some(lo) => {
                let hi = fv.iter().rposition(|x| *x != ZERO).expect("nonzero");
                let mut t = vec![ZERO; lo];
                t.extend(finite_nonzero_roots(&fv[lo..=hi])?);
                t
            }
            None => vec![ZERO],
        };
        for tau in taus {
            let x = point_at(tau)?;
            let s = g.normalized_residual(&x);
            if best.as_ref().map_or(true, |(b, _)| s < *b) {
                best = Some((s, x));
            }
        }
        let (_, x) = best.ok_or_else(|| LabError::DegenerateSample("no candidate for the second coordinate".into()))?;
        roots.push(polish_pair(f, g, x, 10));
    }
    let max_residual = sup(
        roots
            .iter()
            .flat_map(|x| [f.normalized_residual(x), g.normalized_residual(x)]),
    );
    let mut min_separation = f64::INFINITY;
    for i in 0..roots.len() {
        for j in 0..i {
            min_separation = min_separation.min(chordal_distance(&roots[i], &roots[j]));
        }
    }
    Ok(CommonZeros {
        roots,
        max_residual,
        min_separation,
        iterations,
        converged,
    })
}
