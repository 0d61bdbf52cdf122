use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_action, Env, EnvSpec, StepResult};
use crate::error::{Error, Result};

pub const DT: f64 = 0.05;
pub const MAX_FORCE: f64 = 1.0;
pub const MAX_SPEED: f64 = 1.0;
pub const ARENA: f64 = 2.0;
pub const GOAL: [f64; 2] = [0.0, 0.0];
pub const GOAL_RADIUS: f64 = 0.05;
pub const HORIZON: usize = 200;

/// 2-D double integrator that must reach a fixed goal at the origin.
///
/// Observation: `[x, y, ẋ, ẏ]`. Positions are confined to `[-2, 2]²`; hitting
/// a wall zeroes the velocity component pointing into it.
#[derive(Clone, Debug)]
pub struct PointMass {
    pos: [f64; 2],
    vel: [f64; 2],
    steps: usize,
    done: bool,
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new()
    }
}

impl PointMass {
    pub fn new() -> Self {
        Self {
            pos: [1.0, 1.0],
            vel: [0.0, 0.0],
            steps: 0,
            done: false,
        }
    }

    pub fn set_state(&mut self, pos: [f64; 2], vel: [f64; 2]) -> Vec<f64> {
        self.pos = pos;
        self.vel = vel;
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }

    fn dist2(&self) -> f64 {
        (self.pos[0] - GOAL[0]).powi(2) + (self.pos[1] - GOAL[1]).powi(2)
    }
}

impl Env for PointMass {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            obs_dim: 4,
            act_dim: 2,
            act_limit: MAX_FORCE,
            velocity_indices: vec![2, 3],
            horizon: HORIZON,
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pos = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        self.set_state(pos, [0.0, 0.0])
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.done {
            return Err(Error::Contract(
                "step called on a finished episode; reset first".into(),
            ));
        }
        check_action(action, &self.spec())?;
        let u = [
            action[0].clamp(-MAX_FORCE, MAX_FORCE),
            action[1].clamp(-MAX_FORCE, MAX_FORCE),
        ];
        for d in 0..2 {
            self.vel[d] = (self.vel[d] + u[d] * DT).clamp(-MAX_SPEED, MAX_SPEED);
            self.pos[d] += self.vel[d] * DT;
            if self.pos[d].abs() > ARENA {
                self.pos[d] = self.pos[d].clamp(-ARENA, ARENA);
                self.vel[d] = 0.0;
            }
        }
        self.steps += 1;
        let d2 = self.dist2();
        let reward = -d2 - 0.01 * (u[0] * u[0] + u[1] * u[1]);
        let reached = d2.sqrt() <= GOAL_RADIUS;
        self.done = reached || self.steps >= HORIZON;
        Ok(StepResult {
            observation: self.observation(),
            reward,
            done: self.done,
            terminal: reached,
        })
    }
}
