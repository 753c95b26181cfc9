//! Seed derivation for the independent random streams of a run.
//!
//! Every consumer of randomness gets its own ChaCha stream keyed by the run
//! seed, so agent updates can run in any order (or in parallel) and still
//! reproduce the same trace.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Large odd multiplier applied to the day index.
pub const DAY_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Population = 1,
    Schedule = 2,
    Opinion = 3,
}

/// `run_seed ⊕ agent_id ⊕ (day · DAY_MIX)`.
pub fn agent_day_seed(run_seed: u64, agent_id: u32, day: u32) -> u64 {
    run_seed ^ u64::from(agent_id) ^ u64::from(day).wrapping_mul(DAY_MIX)
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

pub fn agent_day_rng(run_seed: u64, agent_id: u32, day: u32, stream: Stream) -> ChaCha8Rng {
    stream_rng(agent_day_seed(run_seed, agent_id, day), stream)
}
