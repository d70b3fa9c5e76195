//! Deterministic seed derivation.
//!
//! Every randomized stage of the pipeline owns an independent stream derived
//! from a single master seed and a stage label, so adding or removing a stage
//! never perturbs the draws seen by any other stage. Streams derived for
//! per-item indices (trajectories, rollouts, bootstrap resamples) make batch
//! work safe to run in any parallel order.

pub use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `(master, tag, index)`.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let tagged = splitmix64(master ^ fnv1a(tag.as_bytes()));
    splitmix64(tagged ^ splitmix64(index))
}

/// A seeded ChaCha stream for the given stage and item index.
pub fn stream(master: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag, index))
}
