//! Deterministic random streams keyed by position rather than call order.
//!
//! Ray sampling draws from a ChaCha8 stream selected by `(seed, azimuth)`
//! and positioned at a fixed word offset per sample, so every sample sees
//! the same numbers no matter how work is scheduled across threads. Image
//! noise uses a stateless hash of `(seed, stage, cell)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 32-bit words reserved for each sample. Sampling one ray consumes at most
/// a handful; rejection loops in the normal sampler almost never exceed it,
/// and overrunning only overlaps the next sample's words.
const WORDS_PER_SAMPLE: u128 = 64;

/// Random stream for one sampled ray of one azimuth column.
pub fn sample_stream(seed: u64, azimuth: u32, sample: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(azimuth as u64);
    rng.set_word_pos(sample as u128 * WORDS_PER_SAMPLE);
    rng
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash of a seed and a list of coordinates.
#[inline]
pub fn hash_key(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(seed), |h, &p| mix64(h ^ p))
}

/// Uniform in [0, 1) from a 64-bit hash (53 mantissa bits).
#[inline]
pub fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Seed for a derived purpose (frame index, noise stage, ...).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    hash_key(seed, &[index])
}
