//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit `u64` seed. Streams are ChaCha8,
//! a counter-based generator, so replays are bit-identical across runs and
//! platforms. Sub-seeds are derived by selecting a ChaCha stream id per stage.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent seed for a named stage from a master seed.
pub fn derive_seed(master: u64, stage: &str) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(fnv1a(stage.as_bytes()));
    rng.next_u64()
}

/// Derive the `index`-th child seed (used for per-trajectory or per-run streams).
pub fn child_seed(parent: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(parent);
    rng.set_stream(index.wrapping_add(1));
    rng.next_u64()
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Draw an index from a discrete distribution by inverse CDF.
pub fn sample_categorical(rng: &mut Rng, probs: &[f64]) -> usize {
    use rand::Rng as _;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the accumulated mass; take the last non-zero entry
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}
