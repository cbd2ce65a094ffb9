//! Seed derivation and the portable generator used everywhere randomness is needed.
//!
//! Every stream is a `ChaCha8Rng` (rand_chacha 0.9) seeded through
//! `SeedableRng::seed_from_u64`. Child seeds are derived from a root seed and
//! a label (target name, patient id, replicate index) with FNV-1a followed by
//! the SplitMix64 finalizer, so a stream depends only on `(root, label)` and
//! never on iteration or scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Name recorded in run manifests.
pub const GENERATOR_NAME: &str = "chacha8/rand_chacha-0.9+splitmix64-fnv1a";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Child seed for a named sub-stream.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    splitmix64(root ^ splitmix64(fnv1a(label.as_bytes())))
}

/// Child seed for an indexed sub-stream (bootstrap replicate, Monte Carlo run).
pub fn derive_seed_index(root: u64, index: u64) -> u64 {
    splitmix64(root.wrapping_add(splitmix64(index ^ 0x5851_f42d_4c95_7f2d)))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
