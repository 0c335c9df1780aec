//! Seeded random streams.
//!
//! Every sequence owns a ChaCha20 generator keyed by the master seed and
//! selected by a 64-bit stream number, so sequence `i` of a batch draws the
//! same numbers regardless of how many workers run or in which order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Identifier written into reproducibility records.
pub const RNG_ALGORITHM: &str = "chacha20/rand_chacha-0.3/seed_from_u64+stream";

pub type SimRng = ChaCha20Rng;

/// Generator for sequence `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Child generator for an independent sub-task, drawn from `parent`.
pub fn child_rng(parent: &mut SimRng) -> SimRng {
    ChaCha20Rng::seed_from_u64(parent.gen::<u64>())
}

/// Uniform draw on `[lo, hi]`; returns `lo` when the interval is empty.
pub fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Uniform integer draw on `[lo, hi]`.
pub fn uniform_int(rng: &mut impl Rng, lo: u32, hi: u32) -> u32 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

pub fn random_sign(rng: &mut impl Rng) -> f64 {
    if rng.gen_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}
