//! Per-path random streams.
//!
//! ChaCha is a counter-based generator: the key comes from the master seed
//! and the 64-bit stream id from `(path_index, lane)`, so path `i` sees the
//! same numbers regardless of which worker simulates it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent sub-streams of one path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Lane {
    Wiener = 0,
    Jumps = 1,
    Bridge = 2,
    Aux = 3,
}

const LANES: u64 = 4;

pub fn path_stream(master_seed: u64, path_index: u64, lane: Lane) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path_index.wrapping_mul(LANES).wrapping_add(lane as u64));
    rng
}
