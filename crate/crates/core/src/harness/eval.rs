use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{ActStats, Agent};
use crate::env::{Env, EnvKind};
use crate::error::Result;
use crate::pomdp::{PomdpConfig, PomdpEnv};
use crate::replay::HistoryWindow;
use crate::rng::{stream, RngStream};

/// Anything that maps an observation and its history to an action.
pub trait Policy {
    fn act(&self, obs: &[f64], history: &HistoryWindow) -> Result<ActStats>;
}

impl Policy for Agent {
    fn act(&self, obs: &[f64], history: &HistoryWindow) -> Result<ActStats> {
        self.act_with_stats(obs, history)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MemoryStats {
    pub signed_mean: f64,
    pub abs_mean: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub episode_returns: Vec<f64>,
    pub mean_return: f64,
    /// Population standard deviation over episodes.
    pub std_return: f64,
    /// Mean of `Q1(o, μ(o, h), h)` over every evaluated step.
    pub avg_q1: f64,
    pub actor_memory: Option<MemoryStats>,
    pub critic_memory: Option<MemoryStats>,
}

#[derive(Default)]
struct MemoryAcc {
    sum: f64,
    abs: f64,
    count: usize,
}

impl MemoryAcc {
    fn add(&mut self, xs: &[f64]) {
        for &x in xs {
            self.sum += x;
            self.abs += x.abs();
        }
        self.count += xs.len();
    }

    fn finish(&self) -> Option<MemoryStats> {
        (self.count > 0).then(|| MemoryStats {
            signed_mean: self.sum / self.count as f64,
            abs_mean: self.abs / self.count as f64,
        })
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs `episodes` noiseless episodes. Each reset seed is drawn from `rng`;
/// the policy sees a live history of length `history_len`.
pub fn evaluate_policy<P: Policy + ?Sized, R: Rng + ?Sized>(
    policy: &P,
    env: &mut dyn Env,
    episodes: usize,
    history_len: usize,
    rng: &mut R,
) -> Result<EvalReport> {
    let spec = env.spec();
    let mut returns = Vec::with_capacity(episodes);
    let (mut q_sum, mut steps) = (0.0, 0usize);
    let (mut actor_mem, mut critic_mem) = (MemoryAcc::default(), MemoryAcc::default());
    for _ in 0..episodes {
        let mut obs = env.reset(rng.random());
        let mut history = HistoryWindow::empty(history_len, spec.obs_dim, spec.act_dim);
        let mut ret = 0.0;
        loop {
            let s = policy.act(&obs, &history)?;
            q_sum += s.q1;
            steps += 1;
            if let Some(m) = &s.actor_memory {
                actor_mem.add(m);
            }
            if let Some(m) = &s.critic_memory {
                critic_mem.add(m);
            }
            let r = env.step(&s.action)?;
            ret += r.reward;
            if r.done {
                break;
            }
            history = history.advanced(&obs, &s.action);
            obs = r.observation;
        }
        returns.push(ret);
    }
    let (mean_return, std_return) = mean_std(&returns);
    Ok(EvalReport {
        episode_returns: returns,
        mean_return,
        std_return,
        avg_q1: if steps > 0 {
            q_sum / steps as f64
        } else {
            f64::NAN
        },
        actor_memory: actor_mem.finish(),
        critic_memory: critic_mem.finish(),
    })
}

/// Standard evaluation of `agent` for a run seeded with `seed`: fresh
/// environment and wrapper driven by the dedicated evaluation streams, so
/// every evaluation point sees the same starting states.
pub fn evaluate_agent(
    agent: &Agent,
    env: EnvKind,
    pomdp: &PomdpConfig,
    episodes: usize,
    seed: u64,
    history_len: usize,
) -> Result<EvalReport> {
    let mut env = PomdpEnv::with_rng(
        env.make(),
        pomdp.clone(),
        stream(seed, RngStream::EvalWrapper),
    )?;
    let mut rng = stream(seed, RngStream::EvalEnv);
    evaluate_policy(agent, &mut env, episodes, history_len, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Pendulum, PointMass};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Constant(Vec<f64>);

    impl Policy for Constant {
        fn act(&self, _obs: &[f64], _h: &HistoryWindow) -> Result<ActStats> {
            Ok(ActStats {
                action: self.0.clone(),
                q1: 1.0,
                actor_memory: None,
                critic_memory: None,
            })
        }
    }

    #[test]
    fn matches_manual_rollout() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut env = Pendulum::new();
        let report = evaluate_policy(&Constant(vec![0.7]), &mut env, 3, 0, &mut rng).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut manual = Vec::new();
        for _ in 0..3 {
            let mut e = Pendulum::new();
            e.reset(rng.random());
            let mut total = 0.0;
            loop {
                let r = e.step(&[0.7]).unwrap();
                total += r.reward;
                if r.done {
                    break;
                }
            }
            manual.push(total);
        }
        assert_eq!(report.episode_returns, manual);
        assert_eq!(report.avg_q1, 1.0);
        assert!(report.actor_memory.is_none());
    }

    #[test]
    fn identical_starts_give_zero_std() {
        struct Fixed;
        impl rand::RngCore for Fixed {
            fn next_u32(&mut self) -> u32 {
                7
            }
            fn next_u64(&mut self) -> u64 {
                7
            }
            fn fill_bytes(&mut self, dst: &mut [u8]) {
                dst.fill(7)
            }
        }
        let mut env = PointMass::new();
        let report =
            evaluate_policy(&Constant(vec![-0.2, 0.3]), &mut env, 4, 2, &mut Fixed).unwrap();
        assert_eq!(report.std_return, 0.0);
    }

    #[test]
    fn population_std() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }
}
