//! Keyed random streams.
//!
//! Level `n` of a cascade with seed `s` reads the ChaCha8 stream `n` of the
//! generator seeded by `s`. Node `(n, k)` owns the block of 64-bit words
//! starting at `k * draws_per_node`, so any node can be resampled in
//! isolation and the result never depends on traversal order or threading.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Address of a node: the root's children live on level 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeKey {
    pub level: u32,
    pub index: u64,
}

pub(crate) fn level_stream(seed: u64, level: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(level as u64);
    rng
}

/// Positions the stream at the first word owned by node `index`.
pub(crate) fn seek(rng: &mut ChaCha8Rng, index: u64, draws_per_node: u64) {
    // Word positions count 32-bit words.
    rng.set_word_pos(index as u128 * draws_per_node as u128 * 2);
}

/// Uniform on `[0, 1)` with 53 random bits.
pub(crate) fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Ensemble families get disjoint replica seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Domain {
    Normalized = 1,
    Residual = 2,
    Reference = 3,
}

/// Seed of replica `i` for an ensemble rooted at `seed`.
pub(crate) fn replica_seed(seed: u64, domain: Domain, i: u64) -> u64 {
    seed ^ splitmix64(i ^ ((domain as u64) << 56))
}

/// Stream for the Gaussian reference sample, disjoint from every level stream.
pub(crate) fn reference_stream(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    rng
}
