//! Seeded generators. Every stochastic routine takes an explicit `u64` seed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator keyed by `seed`.
pub fn seeded_stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Child seed for cell `index` of a run keyed by `master`. Distinct indices
/// map to distinct ChaCha streams, so the result does not depend on the order
/// in which cells are evaluated.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    seeded_stream(master, index.wrapping_add(1)).next_u64()
}
