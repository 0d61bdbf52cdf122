//! Named random streams derived from a single run seed.
//!
//! Every stream is the same ChaCha8 key with a distinct stream id, so
//! draws from one stream never shift another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum RngStream {
    /// Network parameter initialization.
    Init = 1,
    /// Environment reset seeds.
    Env = 2,
    /// Observation corruption while training.
    Wrapper = 3,
    /// Random start actions and exploration noise.
    Explore = 4,
    /// Minibatch sampling and target-policy smoothing noise.
    Replay = 5,
    /// Environment reset seeds for evaluation episodes.
    EvalEnv = 6,
    /// Observation corruption during evaluation.
    EvalWrapper = 7,
}

pub fn stream(seed: u64, which: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
