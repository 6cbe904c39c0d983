//! Seeded random streams.
//!
//! Everything random in a run is drawn from ChaCha8 streams addressed by
//! `(seed, stream, step)`, so any single draw (for instance one dropout mask)
//! can be replayed without replaying everything before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RunRng = ChaCha8Rng;

/// Words reserved per step inside a stream.
const WORDS_PER_STEP: u128 = 1 << 40;

pub fn stream(seed: u64, stream: u64, step: u64) -> RunRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(step as u128 * WORDS_PER_STEP);
    rng
}

/// Well-known stream ids.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const SYNTH: u64 = 3;
    pub const PROBE: u64 = 4;
    /// Dropout layer `k` draws from stream `DROPOUT_BASE + k`.
    pub const DROPOUT_BASE: u64 = 1 << 32;
}
