//! Per-trial seed derivation.
//!
//! A child seed is `mix(mix(mix(base_seed) ^ trial_index) ^ fnv1a64(stream))`
//! where `mix` is the SplitMix64 finalizer and `fnv1a64` hashes the UTF-8
//! stream name. Streams used by the runner are [`SPLIT`], [`SKETCH`] and
//! [`INIT`]. Each trial draws from its own generators, so changing one
//! trial never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SPLIT: &str = "split";
pub const SKETCH: &str = "sketch";
pub const INIT: &str = "init";

/// SplitMix64 output function.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn derive_seed(base_seed: u64, trial_index: u64, stream: &str) -> u64 {
    mix(mix(mix(base_seed) ^ trial_index) ^ fnv1a64(stream.as_bytes()))
}

pub fn stream_rng(base_seed: u64, trial_index: u64, stream: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base_seed, trial_index, stream))
}
