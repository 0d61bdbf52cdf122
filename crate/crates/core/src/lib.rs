//! LSTM-TD3: a recurrent actor-critic for partially observable continuous
//! control, with DDPG, TD3 and observation-window TD3 baselines.
//!
//! The crate is layered bottom-up:
//!
//! - [`tensor`]: dense `f64` tensors and a reverse-mode tape
//! - [`nn`]: linear and LSTM layers, parameter sets, Adam, target updates
//! - [`env`]: pendulum swing-up and point-mass environments
//! - [`pomdp`]: observation corruption wrappers (RV, FLK, RN, RSM)
//! - [`replay`]: ring-buffer replay with episode-aware history windows
//! - [`agent`]: actor/critic networks and TD3-style updates for every variant
//! - [`harness`]: training loop, evaluation protocols, checkpoints, curves

pub mod agent;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod pomdp;
pub mod replay;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
