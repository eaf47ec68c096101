//! Seeded randomness. Every stochastic routine takes an explicit RNG and
//! every parallelisable lane derives its own stream from `(seed, step, lane)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SeededRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream seed for a given step and lane of a run.
pub fn derive_seed(seed: u64, step: u64, lane: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ step) ^ lane.rotate_left(17))
}

pub fn rng_from(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn lane_rng(seed: u64, step: u64, lane: u64) -> SeededRng {
    rng_from(derive_seed(seed, step, lane))
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Standard Gumbel draw `-ln(-ln u)`, `u` uniform on the open unit interval.
pub fn gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    -(-u.ln()).ln()
}
