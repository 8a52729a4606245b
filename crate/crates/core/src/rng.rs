//! Seeded RNG plumbing.
//!
//! Everything random in a run flows from one [`RunRng`] built from a `u64`
//! seed. Streaming problems draw their sample realizations from a separate
//! counter-based ChaCha stream addressed by the sample id, so evaluating the
//! same id twice (at `x_t` and at `x_{t-1}`) reproduces the same sample.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RunRng = ChaCha8Rng;

pub fn run_rng(seed: u64) -> RunRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// RNG positioned at the start of stream `stream` of the key derived from
/// `key`. Identical arguments give identical output on every platform.
pub fn stream_rng(key: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(stream);
    rng.set_word_pos(0);
    rng
}

/// Deterministic seed sequence derived from a master seed.
pub fn expand_seeds(master: u64, count: usize) -> alloc::vec::Vec<u64> {
    use rand::RngCore;
    let mut rng = stream_rng(master, 0x5eed);
    (0..count).map(|_| rng.next_u64()).collect()
}
