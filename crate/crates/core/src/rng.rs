//! Deterministic random streams.
//!
//! Every task gets its own ChaCha8 stream derived from the master seed and a task id,
//! so results do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream `stream` of the generator seeded by `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Task id for chunk `chunk` of cell `cell`.
pub fn task_id(cell: u32, chunk: u32) -> u64 {
    (u64::from(cell) << 32) | u64::from(chunk)
}
