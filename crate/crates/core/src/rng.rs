//! Seeded random streams.
//!
//! Every randomized operation in this crate derives its generator from an
//! explicit `(seed, domain, index)` triple. Domains keep unrelated operations
//! (e.g. reasoning stripping vs. truncation) on independent streams even when
//! they share a seed, and indexing by record makes per-record decisions
//! independent of iteration order, so sharded and sequential runs agree.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. Each randomized operation owns one constant.
pub mod domain {
    pub const STRIP_REASONING: u64 = 1;
    pub const TRUNCATE_BUDGET: u64 = 2;
    pub const CURRICULUM: u64 = 3;
    pub const DPO_LABELING: u64 = 4;
    pub const ROUTER_WEIGHTS: u64 = 5;
    pub const ROUTER_NOISE: u64 = 6;
}

/// Derive a reproducible generator for `(seed, domain, index)`.
///
/// ChaCha8 is used because its output is portable: the same triple yields the
/// same stream on any platform and any build of this crate.
pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
