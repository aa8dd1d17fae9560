//! Random expressions in `(z, z̄)` built from polynomials and elementary
//! functions, evaluated either as jets or pointwise for the difference oracle.

#![allow(dead_code)]

use kodlab_core::jet::{JetScalar, MixedJet2};
use kodlab_core::C64;
use rand::Rng;

#[derive(Debug, Clone)]
pub enum Expr {
    Z(usize),
    Zbar(usize),
    Const(C64),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    /// `exp(e / 2)`.
    Exp(Box<Expr>),
    /// `log(1 + |e|²)`.
    LogWeight(Box<Expr>),
    /// `1 / (1 + |e|²)`.
    InvWeight(Box<Expr>),
    Pow(Box<Expr>, u32),
    Re(Box<Expr>),
}

impl Expr {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, dim: usize, depth: u32) -> Self {
        if depth == 0 || rng.random::<f64>() < 0.2 {
            return match rng.random_range(0..3) {
                0 => Expr::Z(rng.random_range(0..dim)),
                1 => Expr::Zbar(rng.random_range(0..dim)),
                _ => Expr::Const(C64::new(
                    rng.random::<f64>() * 2.0 - 1.0,
                    rng.random::<f64>() * 2.0 - 1.0,
                )),
            };
        }
        let sub = |rng: &mut R| Box::new(Expr::random(rng, dim, depth - 1));
        match rng.random_range(0..9) {
            0 => Expr::Add(sub(rng), sub(rng)),
            1 => Expr::Sub(sub(rng), sub(rng)),
            2 | 3 => Expr::Mul(sub(rng), sub(rng)),
            4 => Expr::Exp(sub(rng)),
            5 => Expr::LogWeight(sub(rng)),
            6 => Expr::InvWeight(sub(rng)),
            7 => Expr::Pow(sub(rng), rng.random_range(2..4)),
            _ => Expr::Re(sub(rng)),
        }
    }

    /// `coords` are the jets (or values) of `z_a`; `conj_coords` of `z̄_a`.
    pub fn eval<S: JetScalar>(&self, coords: &[S], conj_coords: &[S]) -> S {
        let one = || coords[0].real_const(1.0);
        match self {
            Expr::Z(a) => coords[*a].clone(),
            Expr::Zbar(a) => conj_coords[*a].clone(),
            Expr::Const(c) => coords[0].constant_like(*c),
            Expr::Add(a, b) => a.eval(coords, conj_coords) + b.eval(coords, conj_coords),
            Expr::Sub(a, b) => a.eval(coords, conj_coords) - b.eval(coords, conj_coords),
            Expr::Mul(a, b) => a.eval(coords, conj_coords) * b.eval(coords, conj_coords),
            Expr::Exp(a) => a.eval(coords, conj_coords).scale(C64::new(0.5, 0.0)).exp(),
            Expr::LogWeight(a) => (one() + a.eval(coords, conj_coords).abs_sq()).ln_unchecked(),
            Expr::InvWeight(a) => (one() + a.eval(coords, conj_coords).abs_sq()).recip_unchecked(),
            Expr::Pow(a, k) => a.eval(coords, conj_coords).powi(*k),
            Expr::Re(a) => a.eval(coords, conj_coords).re(),
        }
    }

    pub fn jet(&self, z: &[C64]) -> MixedJet2 {
        let coords = MixedJet2::coordinates(z);
        let conj: Vec<MixedJet2> = coords.iter().map(|c| c.conj()).collect();
        self.eval(&coords, &conj)
    }

    pub fn value(&self, z: &[C64]) -> C64 {
        let conj: Vec<C64> = z.iter().map(|w| w.conj()).collect();
        self.eval(z, &conj)
    }
}

/// A point of the polydisk of radius 0.8, where nested powers and
/// exponentials stay moderate and the difference oracle keeps its accuracy.
pub fn disk_point<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<C64> {
    (0..dim)
        .map(|_| C64::from_polar(0.8 * rng.random::<f64>().sqrt(), std::f64::consts::TAU * rng.random::<f64>()))
        .collect()
}

/// Largest component gap between the jet and the difference oracle, relative
/// to the largest oracle component (floored at 1).
pub fn relative_gap(jet: &MixedJet2, fd: &super::fd::FdJet) -> f64 {
    let pairs = std::iter::once((jet.value, fd.value))
        .chain(jet.d.iter().copied().zip(fd.d.iter().copied()))
        .chain(jet.dbar.iter().copied().zip(fd.dbar.iter().copied()))
        .chain(jet.mixed.iter().copied().zip(fd.mixed.iter().copied()));
    let (mut gap, mut scale) = (0.0_f64, 1.0_f64);
    for (a, b) in pairs {
        gap = gap.max((a - b).norm());
        scale = scale.max(b.norm());
    }
    gap / scale
}
