//! Seed fan-out for reproducible runs.
//!
//! A single 64-bit seed is expanded into named sub-streams via fixed stream
//! offsets on ChaCha8. Streams with the same seed but different offsets are
//! statistically independent, so the task/channel draws of an episode do not
//! depend on how much randomness an agent consumed for exploration.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Task arrivals (sizes, cycles, deadlines, user ids).
pub const STREAM_TASKS: u64 = 0x01;
/// Per-episode channel realizations (SNR jitter).
pub const STREAM_CHANNELS: u64 = 0x02;
/// Agent exploration noise (Dirichlet draws, OU, Gaussian).
pub const STREAM_EXPLORATION: u64 = 0x03;
/// Network weight initialization.
pub const STREAM_INIT: u64 = 0x04;
/// Replay-buffer minibatch sampling.
pub const STREAM_REPLAY: u64 = 0x05;
/// Target-policy smoothing noise used inside learn steps.
pub const STREAM_SMOOTHING: u64 = 0x06;

/// Per-agent offsets so that paired runs share env streams but not
/// exploration streams.
pub fn agent_offset(kind_index: u64) -> u64 {
    0x9e37_79b9_0000_0000 ^ (kind_index << 32)
}

/// Build the RNG for a named sub-stream of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mix an episode index into a run seed (splitmix64 finalizer).
pub fn episode_seed(run_seed: u64, episode: u64) -> u64 {
    let mut z = run_seed ^ episode.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
