//! Independent finite-difference oracle for mixed 2-jets.
//!
//! Central differences in the real coordinates `x_a, y_a` with one step of
//! Richardson extrapolation. Shared by unit and integration tests.

#![allow(dead_code)]

use num_complex::Complex64 as C64;

pub struct FdJet {
    pub value: C64,
    pub d: Vec<C64>,
    pub dbar: Vec<C64>,
    /// Row-major `∂_a ∂̄_b`.
    pub mixed: Vec<C64>,
}

fn shifted(z: &[C64], moves: &[(usize, C64)]) -> Vec<C64> {
    let mut w = z.to_vec();
    for &(a, dz) in moves {
        w[a] += dz;
    }
    w
}

fn raw(f: &dyn Fn(&[C64]) -> C64, z: &[C64], h: f64) -> (Vec<C64>, Vec<C64>, Vec<C64>) {
    let m = z.len();
    // Real directions: 2a -> x_a, 2a+1 -> y_a.
    let dir = |k: usize| -> (usize, C64) {
        if k % 2 == 0 {
            (k / 2, C64::new(h, 0.0))
        } else {
            (k / 2, C64::new(0.0, h))
        }
    };
    let first = |k: usize| -> C64 {
        let (a, s) = dir(k);
        (f(&shifted(z, &[(a, s)])) - f(&shifted(z, &[(a, -s)]))) / (2.0 * h)
    };
    let second = |k: usize, l: usize| -> C64 {
        let (a, s) = dir(k);
        let (b, t) = dir(l);
        (f(&shifted(z, &[(a, s), (b, t)])) - f(&shifted(z, &[(a, s), (b, -t)]))
            - f(&shifted(z, &[(a, -s), (b, t)]))
            + f(&shifted(z, &[(a, -s), (b, -t)])))
            / (4.0 * h * h)
    };
    let i = C64::new(0.0, 1.0);
    let mut d = Vec::with_capacity(m);
    let mut dbar = Vec::with_capacity(m);
    for a in 0..m {
        let fx = first(2 * a);
        let fy = first(2 * a + 1);
        d.push((fx - i * fy) * 0.5);
        dbar.push((fx + i * fy) * 0.5);
    }
    let mut mixed = Vec::with_capacity(m * m);
    for a in 0..m {
        for b in 0..m {
            let xx = second(2 * a, 2 * b);
            let yy = second(2 * a + 1, 2 * b + 1);
            let xy = second(2 * a, 2 * b + 1);
            let yx = second(2 * a + 1, 2 * b);
            mixed.push((xx + yy + i * (xy - yx)) * 0.25);
        }
    }
    (d, dbar, mixed)
}

/// Richardson-extrapolated derivatives of `f` at `z` with base step `h`.
pub fn fd_jet(f: &dyn Fn(&[C64]) -> C64, z: &[C64], h: f64) -> FdJet {
    let (d1, b1, m1) = raw(f, z, h);
    let (d2, b2, m2) = raw(f, z, h / 2.0);
    let rich = |coarse: Vec<C64>, fine: Vec<C64>| -> Vec<C64> {
        coarse
            .into_iter()
            .zip(fine)
            .map(|(c, f)| (f * 4.0 - c) / 3.0)
            .collect()
    };
    FdJet {
        value: f(z),
        d: rich(d1, d2),
        dbar: rich(b1, b2),
        mixed: rich(m1, m2),
    }
}
