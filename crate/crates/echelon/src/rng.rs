//! Counter-based derivation of independent random streams.
//!
//! Every stochastic quantity in the pipeline is drawn from a ChaCha stream
//! keyed by a root seed plus a tag path (purpose, replicate indices,
//! variable indices). Any single draw is therefore replayable in isolation:
//! re-deriving the stream for the same `(seed, tags)` yields the same
//! bytes regardless of evaluation order or thread count.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream purposes. Frozen constants: changing them changes every
/// generated instance and ensemble.
pub mod purpose {
    pub const GENERATOR: u64 = 1;
    pub const DEMAND_REALIZATION: u64 = 2;
    pub const NOISE: u64 = 3;
}

/// SplitMix64 finalizer; good avalanche, cheap, stable.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent ChaCha stream from a seed and a tag path.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = mix(seed ^ 0x6368_6163_6861_3231); // domain constant
    for &t in tags {
        state = mix(state ^ mix(t));
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = mix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Uniform on `[0, 1)` with 53-bit resolution.
#[inline]
pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Uniform on `(0, 1]` (never zero; used for inverse-CDF sampling).
#[inline]
pub fn uniform_open_closed(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - uniform(rng)
}

/// Uniform on `[lo, hi]`.
#[inline]
pub fn uniform_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform(rng)
}

/// Standard normal via Box-Muller (one value per call; the sine half is
/// discarded so draws stay independent across derived streams).
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = uniform_open_closed(rng);
    let u2 = uniform(rng);
    crate::fmath::sqrt(-2.0 * crate::fmath::ln(u1))
        * crate::fmath::cos(2.0 * core::f64::consts::PI * u2)
}
