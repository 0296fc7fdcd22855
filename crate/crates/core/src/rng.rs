//! Deterministic random stream derivation.
//!
//! Every stream is keyed by logical indices (replicate, trajectory, ...) and
//! never by worker identity, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream purposes; part of the derivation key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Trajectory = 1,
    Baseline = 2,
    Bootstrap = 3,
    HazardRatio = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a root seed with an ordered list of keys into a 64-bit stream seed.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &k in keys {
        h = splitmix64(h ^ splitmix64(k.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

pub fn stream(seed: u64, purpose: Purpose, keys: &[u64]) -> StreamRng {
    let mut all = Vec::with_capacity(keys.len() + 1);
    all.push(purpose as u64);
    all.extend_from_slice(keys);
    StreamRng::seed_from_u64(derive_seed(seed, &all))
}
