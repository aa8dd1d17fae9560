//! Counter-keyed random streams.
//!
//! Every task draws from its own ChaCha20 stream selected by
//! `(master seed, experiment label, task index)`, so results do not depend on
//! how tasks are scheduled across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::jet::C64;

/// Identifier embedded in every output file.
pub const RNG_ALGORITHM: &str = "chacha20/stream=splitmix64(fnv1a(label),index)";

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// The generator for task `index` of experiment `label`.
pub fn stream(seed: u64, label: &str, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(splitmix64(fnv1a(label.as_bytes()) ^ splitmix64(index)));
    rng
}

/// Standard complex Gaussian: `E|g|² = 1`, real and imaginary parts independent.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_gaussians<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<C64> {
    (0..len).map(|_| complex_gaussian(rng)).collect()
}
