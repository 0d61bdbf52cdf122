//! Continuous-control environments.

mod pendulum;
mod pointmass;

use serde::{Deserialize, Serialize};

pub use pendulum::Pendulum;
pub use pointmass::PointMass;

use crate::error::{Error, Result};

/// Static description of an environment's interface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Symmetric bound applied to every action dimension.
    pub act_limit: f64,
    /// Observation entries that carry velocity information.
    pub velocity_indices: Vec<usize>,
    pub horizon: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// The episode is over (terminal state or horizon reached).
    pub done: bool,
    /// The episode ended in a true terminal state rather than by time limit.
    pub terminal: bool,
}

pub trait Env {
    fn spec(&self) -> EnvSpec;

    /// Starts a new episode; the initial state is a pure function of `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    /// Advances one step. Actions are clipped to `±act_limit` first.
    /// Stepping a finished episode is a contract error.
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Pendulum,
    PointMass,
}

impl EnvKind {
    pub fn make(self) -> Box<dyn Env> {
        match self {
            EnvKind::Pendulum => Box::new(Pendulum::new()),
            EnvKind::PointMass => Box::new(PointMass::new()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Pendulum => "pendulum",
            EnvKind::PointMass => "pointmass",
        }
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(EnvKind::Pendulum),
            "pointmass" | "point-mass" => Ok(EnvKind::PointMass),
            other => Err(Error::Config(format!("unknown environment `{other}`"))),
        }
    }
}

pub(crate) fn check_action(action: &[f64], spec: &EnvSpec) -> Result<()> {
    if action.len() != spec.act_dim {
        return Err(Error::dim("env.step", &[action.len()], &[spec.act_dim]));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::Contract("action contains non-finite values".into()));
    }
    Ok(())
}
