use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{save_checkpoint, CheckpointMeta};
use super::config::RunConfig;
use super::eval::{evaluate_agent, EvalReport};
use crate::agent::Agent;
use crate::env::Env;
use crate::error::{Error, Result};
use crate::pomdp::PomdpEnv;
use crate::replay::{advance_live_history, ReplayBuffer, Transition};
use crate::rng::{stream, RngStream};

pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const CONFIG_ECHO_FILE: &str = "config.json";

/// One evaluation point. Memory columns are empty for memoryless variants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub avg_test_return: f64,
    pub std_test_return: f64,
    pub avg_q1: f64,
    pub avg_actor_memory: Option<f64>,
    pub avg_critic_memory: Option<f64>,
    pub avg_actor_memory_abs: Option<f64>,
    pub avg_critic_memory_abs: Option<f64>,
}

impl MetricsRow {
    pub fn from_report(step: u64, r: &EvalReport) -> Self {
        Self {
            step,
            avg_test_return: r.mean_return,
            std_test_return: r.std_return,
            avg_q1: r.avg_q1,
            avg_actor_memory: r.actor_memory.map(|m| m.signed_mean),
            avg_critic_memory: r.critic_memory.map(|m| m.signed_mean),
            avg_actor_memory_abs: r.actor_memory.map(|m| m.abs_mean),
            avg_critic_memory_abs: r.critic_memory.map(|m| m.abs_mean),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TimingRow {
    step: u64,
    wall_time: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub seed: u64,
    pub agent: Agent,
    pub metrics: Vec<MetricsRow>,
    pub dir: PathBuf,
    pub episodes: u64,
}

impl TrainOutcome {
    pub fn metrics_path(&self) -> PathBuf {
        self.dir.join(METRICS_FILE)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.dir.join(CHECKPOINT_FILE)
    }
}

/// Trains every seed of `config` one after another.
pub fn run_training(config: &RunConfig) -> Result<Vec<TrainOutcome>> {
    config.validate()?;
    retain_heap();
    config
        .seeds
        .iter()
        .map(|&s| train_seed(config, s))
        .collect()
}

/// Keeps freed blocks on the heap. An update allocates and frees many
/// half-megabyte buffers; with glibc's defaults each one is a fresh `mmap`
/// whose pages fault in again.
fn retain_heap() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    {
        static ONCE: std::sync::Once = std::sync::Once::new();
        // SAFETY: mallopt only adjusts allocator tunables.
        ONCE.call_once(|| unsafe {
            libc::mallopt(libc::M_MMAP_THRESHOLD, 1 << 30);
            libc::mallopt(libc::M_TRIM_THRESHOLD, 1 << 30);
        });
    }
}

struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl CsvOut {
    fn create(path: PathBuf) -> Result<Self> {
        let writer = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        Ok(Self { path, writer })
    }

    fn append<T: Serialize>(&mut self, row: &T) -> Result<()> {
        self.writer
            .serialize(row)
            .map_err(|e| Error::csv(&self.path, e))?;
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// The interaction loop for one seed: act, store, and after `update_after`
/// steps one gradient update per environment step.
pub fn train_seed(config: &RunConfig, seed: u64) -> Result<TrainOutcome> {
    config.validate()?;
    let dir = config.seed_dir(seed);
    create_dir(&dir)?;
    let echo = serde_json::to_string_pretty(config).map_err(|e| Error::Config(e.to_string()))?;
    let echo_path = dir.join(CONFIG_ECHO_FILE);
    std::fs::write(&echo_path, echo).map_err(|e| Error::io(&echo_path, e))?;
    let mut metrics_out = CsvOut::create(dir.join(METRICS_FILE))?;
    let mut timing_out = CsvOut::create(dir.join(TIMING_FILE))?;

    let mut env_rng = stream(seed, RngStream::Env);
    let mut explore_rng = stream(seed, RngStream::Explore);
    let mut replay_rng = stream(seed, RngStream::Replay);
    let mut env = PomdpEnv::with_rng(
        config.env.make(),
        config.pomdp.clone(),
        stream(seed, RngStream::Wrapper),
    )?;
    let spec = env.spec();
    let mut agent = Agent::build(config.agent.clone(), &spec, seed)?;
    let mut buffer = ReplayBuffer::new(config.agent.replay_capacity, spec.obs_dim, spec.act_dim)?;
    let l = config.agent.history_len;

    let started = Instant::now();
    let mut metrics = Vec::new();
    let mut episode_id = 0u64;
    let mut step_in_episode = 0usize;
    let mut obs = env.reset(env_rng.random());
    let mut history = agent.new_history();

    for t in 1..=config.total_steps {
        let action = agent.exploration_action(t, &obs, &history, &mut explore_rng)?;
        let r = env.step(&action)?;
        step_in_episode += 1;
        buffer.store(Transition {
            obs: obs.clone(),
            act: action.clone(),
            reward: r.reward,
            next_obs: r.observation.clone(),
            done: r.terminal,
            episode_id,
            step_in_episode,
        })?;
        history = advance_live_history(&history, &obs, &action, r.done);
        if r.done {
            episode_id += 1;
            step_in_episode = 0;
            obs = env.reset(env_rng.random());
        } else {
            obs = r.observation;
        }

        if t > config.agent.update_after {
            let batch = buffer.sample_batch(config.agent.batch_size, l, &mut replay_rng)?;
            agent.train_step(&batch, &mut replay_rng)?;
        }

        if t % config.eval_every == 0 {
            let report = evaluate_agent(
                &agent,
                config.env,
                &config.pomdp,
                config.eval_episodes,
                seed,
                l,
            )?;
            let row = MetricsRow::from_report(t, &report);
            metrics_out.append(&row)?;
            timing_out.append(&TimingRow {
                step: t,
                wall_time: started.elapsed().as_secs_f64(),
            })?;
            metrics.push(row);
        }
    }

    let mut meta = CheckpointMeta {
        env: Some(config.env),
        pomdp: Some(config.pomdp.clone()),
        seed: Some(seed),
        steps: Some(config.total_steps),
        ..Default::default()
    };
    for (name, rng) in [
        ("env", env_rng),
        ("wrapper", env.corruptor().rng().clone()),
        ("explore", explore_rng),
        ("replay", replay_rng),
    ] {
        meta.rng_states.insert(name.to_string(), rng);
    }
    save_checkpoint(&agent, &meta, &dir.join(CHECKPOINT_FILE))?;

    Ok(TrainOutcome {
        seed,
        agent,
        metrics,
        dir,
        episodes: episode_id,
    })
}

/// Reads a metrics file written by [`train_seed`].
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::csv(path, e)))
        .collect()
}
