//! Deterministic random-number streams.
//!
//! Every stochastic component draws from its own ChaCha12 stream derived
//! from `(base_seed, purpose, a, b)` via SplitMix64 mixing, so per-episode,
//! per-class, and per-candidate streams are independent and reproducible.
//! The mapping is part of the output contract: identical seeds give
//! bit-identical results regardless of thread count or platform.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream purposes. Values are stable identifiers; do not renumber.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    /// Per-class arrival sampling inside an evaluation episode.
    EpisodeArrivals = 1,
    /// Service-time draws inside an evaluation episode.
    EpisodeService = 2,
    /// Order-statistics Monte Carlo features.
    Features = 3,
    /// k-means centroid initialisation.
    Kmeans = 4,
    /// Random state aggregation.
    RandomAggregation = 5,
    /// Grid-search tuning episodes (disjoint from evaluation episodes).
    GridSearch = 6,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent ChaCha12 stream for `(seed, purpose, a, b)`.
pub fn stream(seed: u64, purpose: Purpose, a: u64, b: u64) -> ChaCha12Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    let words = [
        splitmix64(&mut state),
        splitmix64(&mut state) ^ (purpose as u64).wrapping_mul(0xa076_1d64_78bd_642f),
        splitmix64(&mut state) ^ a.wrapping_mul(0xe703_7ed1_a0b4_28db),
        splitmix64(&mut state) ^ b.wrapping_mul(0x8ebc_6af0_9c88_c6e3),
    ];
    // One extra mixing round so that (a, b) affect every key word.
    let mut fold = words[0] ^ words[1] ^ words[2] ^ words[3];
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        let w = splitmix64(&mut fold) ^ words[i % 4];
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Exponential draw with the given rate via inverse CDF.
///
/// Uses `1 - u` so a zero uniform cannot produce `ln(0)`.
pub fn exponential<R: rand::Rng>(rng: &mut R, rate: f64) -> f64 {
    debug_assert!(rate > 0.0);
    let u: f64 = rng.gen();
    -(1.0 - u).ln() / rate
}
