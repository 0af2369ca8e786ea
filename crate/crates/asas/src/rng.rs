//! All randomness flows from one master seed through named sub-streams,
//! so initialization, shuffling, and dropout are independently
//! reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stable stream ids; adding a stream must not renumber existing ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Dropout = 3,
    Synth = 4,
}

/// Deterministic RNG for a named sub-stream of a master seed.
pub fn stream_rng(master_seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream as u64);
    rng
}

/// Snapshot of a stream's position, enough to resume it bit-exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngCursor {
    pub word_pos: u128,
}

pub fn cursor_of(rng: &ChaCha8Rng) -> RngCursor {
    RngCursor { word_pos: rng.get_word_pos() }
}

pub fn restore(master_seed: u64, stream: Stream, cursor: RngCursor) -> ChaCha8Rng {
    let mut rng = stream_rng(master_seed, stream);
    rng.set_word_pos(cursor.word_pos);
    rng
}
