//! Seeded random streams. Every random draw in the crate goes through a
//! ChaCha8 generator built here, so runs replay bit-exactly from their seeds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Identifier recorded in buffer metadata and manifests.
pub const RNG_ALGORITHM: &str = "chacha8";

/// Independent streams derived from one seed.
pub(crate) mod stream {
    pub const INIT: u64 = 0;
    pub const BATCHES: u64 = 1;
    pub const ROLLOUT: u64 = 2;
    pub const NOISE: u64 = 3;
}

pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer over `(seed, tag)`; used to give experiment legs
/// decorrelated component seeds.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Inverse-CDF draw from a probability row.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    // u landed in the rounding gap above the cumulative sum
    last_positive
}
