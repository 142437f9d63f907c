//! Control-invariant-set (CIS) enhanced reinforcement learning for a
//! continuously stirred tank reactor.
//!
//! The crate is organised bottom-up:
//!
//! * [`dynamics`]: CSTR model and the fixed-step discrete-time map.
//! * [`cis`]: grid approximation of the control invariant set, the backup
//!   action table and their file formats.
//! * [`env`]: episodic environment with CIS reward shaping, in-set initial
//!   sampling and the state-reset technique.
//! * [`agent`]: PPO actor-critic with hand-written backpropagation.
//! * [`supervisor`]: safety supervisor for online deployment with bounded
//!   retraining and backup fallback.
//! * [`harness`]: experiment orchestration, evaluation and CSV output.

pub mod agent;
pub mod cis;
pub mod dynamics;
pub mod env;
mod error;
pub mod harness;
pub mod supervisor;

pub use error::{Error, Result};

/// Random source used everywhere a seeded stream is required.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Builds the crate's random source from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> SimRng {
    use rand::SeedableRng;
    SimRng::seed_from_u64(seed)
}
