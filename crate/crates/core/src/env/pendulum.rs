use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_action, Env, EnvSpec, StepResult};
use crate::error::{Error, Result};

pub const DT: f64 = 0.05;
pub const GRAVITY: f64 = 10.0;
pub const MASS: f64 = 1.0;
pub const LENGTH: f64 = 1.0;
pub const MAX_TORQUE: f64 = 2.0;
pub const MAX_SPEED: f64 = 8.0;
pub const HORIZON: usize = 200;

/// Torque-limited pendulum swing-up. `θ = 0` is upright.
///
/// Observation: `[cos θ, sin θ, θ̇]`.
#[derive(Clone, Debug)]
pub struct Pendulum {
    theta: f64,
    theta_dot: f64,
    steps: usize,
    done: bool,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

impl Pendulum {
    pub fn new() -> Self {
        Self {
            theta: PI,
            theta_dot: 0.0,
            steps: 0,
            done: false,
        }
    }

    /// Places the pendulum in an explicit state and starts a fresh episode.
    pub fn set_state(&mut self, theta: f64, theta_dot: f64) -> Vec<f64> {
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    pub fn state(&self) -> (f64, f64) {
        (self.theta, self.theta_dot)
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }
}

impl Env for Pendulum {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            obs_dim: 3,
            act_dim: 1,
            act_limit: MAX_TORQUE,
            velocity_indices: vec![2],
            horizon: HORIZON,
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = rng.random_range(-PI..PI);
        let theta_dot = rng.random_range(-1.0..1.0);
        self.set_state(theta, theta_dot)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.done {
            return Err(Error::Contract(
                "step called on a finished episode; reset first".into(),
            ));
        }
        check_action(action, &self.spec())?;
        let u = action[0].clamp(-MAX_TORQUE, MAX_TORQUE);
        let th = wrap_angle(self.theta);
        let cost = th * th + 0.1 * self.theta_dot * self.theta_dot + 0.001 * u * u;

        let accel =
            3.0 * GRAVITY / (2.0 * LENGTH) * self.theta.sin() + 3.0 / (MASS * LENGTH * LENGTH) * u;
        self.theta_dot = (self.theta_dot + accel * DT).clamp(-MAX_SPEED, MAX_SPEED);
        self.theta += self.theta_dot * DT;
        self.steps += 1;
        self.done = self.steps >= HORIZON;
        Ok(StepResult {
            observation: self.observation(),
            reward: -cost,
            done: self.done,
            terminal: false,
        })
    }
}
