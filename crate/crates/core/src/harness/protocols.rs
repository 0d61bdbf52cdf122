//! Evaluation protocols built on saved checkpoints.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::checkpoint::load_checkpoint;
use super::config::RunConfig;
use super::curves::CurveTable;
use super::eval::evaluate_agent;
use super::train::run_training;
use crate::agent::Variant;
use crate::error::{Error, Result};
use crate::pomdp::{PomdpConfig, PomdpVersion};

pub const HISTORY_LENGTHS: [usize; 4] = [0, 1, 3, 5];
pub const P_FLK_GRID: [f64; 5] = [0.05, 0.1, 0.2, 0.5, 0.8];
/// Versions sharing the clean observation width.
pub const SAME_WIDTH_VERSIONS: [PomdpVersion; 4] = [
    PomdpVersion::Mdp,
    PomdpVersion::Flk,
    PomdpVersion::Rn,
    PomdpVersion::Rsm,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossEvalRow {
    pub checkpoint: String,
    pub train_version: PomdpVersion,
    pub eval_version: PomdpVersion,
    pub mean_return: f64,
    pub std_return: f64,
}

/// Evaluates a checkpoint under a different observation corruption.
/// Corruptions that change the observation width are refused.
pub fn cross_evaluate(
    checkpoint: &Path,
    eval_pomdp: &PomdpConfig,
    episodes: usize,
    seed: u64,
) -> Result<CrossEvalRow> {
    let (agent, meta) = load_checkpoint(checkpoint)?;
    let env = meta.env.ok_or_else(|| {
        Error::Config(format!(
            "{} does not record its environment",
            checkpoint.display()
        ))
    })?;
    let eval_spec = eval_pomdp.wrapped_spec(&env.make().spec())?;
    if eval_spec.obs_dim != agent.spec().obs_dim {
        return Err(Error::ObsDimMismatch {
            expected: agent.spec().obs_dim,
            actual: eval_spec.obs_dim,
        });
    }
    let report = evaluate_agent(
        &agent,
        env,
        eval_pomdp,
        episodes,
        seed,
        agent.config().history_len,
    )?;
    Ok(CrossEvalRow {
        checkpoint: checkpoint.display().to_string(),
        train_version: meta.pomdp.map_or(PomdpVersion::Mdp, |p| p.version),
        eval_version: eval_pomdp.version,
        mean_return: report.mean_return,
        std_return: report.std_return,
    })
}

/// Every checkpoint against every evaluation corruption, row-major.
pub fn cross_evaluate_grid(
    checkpoints: &[PathBuf],
    eval_pomdps: &[PomdpConfig],
    episodes: usize,
    seed: u64,
) -> Result<Vec<CrossEvalRow>> {
    let mut rows = Vec::with_capacity(checkpoints.len() * eval_pomdps.len());
    for ckpt in checkpoints {
        for p in eval_pomdps {
            rows.push(cross_evaluate(ckpt, p, episodes, seed)?);
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub l_train: usize,
    pub l_eval: usize,
    pub mean_return: f64,
    pub std_return: f64,
}

/// Evaluates the same LSTM-TD3 parameters with different history lengths.
pub fn history_length_sweep(
    checkpoint: &Path,
    lengths: &[usize],
    episodes: usize,
    seed: u64,
) -> Result<Vec<HistoryRow>> {
    let (agent, meta) = load_checkpoint(checkpoint)?;
    if agent.config().variant != Variant::LstmTd3 {
        return Err(Error::Config(format!(
            "history-length sweeps need an lstm-td3 checkpoint, got {}",
            agent.config().variant
        )));
    }
    let env = meta.env.ok_or_else(|| {
        Error::Config(format!(
            "{} does not record its environment",
            checkpoint.display()
        ))
    })?;
    let pomdp = meta.pomdp.unwrap_or_default();
    lengths
        .iter()
        .map(|&l| {
            let r = evaluate_agent(&agent, env, &pomdp, episodes, seed, l)?;
            Ok(HistoryRow {
                l_train: agent.config().history_len,
                l_eval: l,
                mean_return: r.mean_return,
                std_return: r.std_return,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    PFlk,
    SigmaRn,
    PRsm,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::PFlk => "p-flk",
            SweepParam::SigmaRn => "sigma-rn",
            SweepParam::PRsm => "p-rsm",
        }
    }

    pub fn version(self) -> PomdpVersion {
        match self {
            SweepParam::PFlk => PomdpVersion::Flk,
            SweepParam::SigmaRn => PomdpVersion::Rn,
            SweepParam::PRsm => PomdpVersion::Rsm,
        }
    }

    pub fn apply(self, pomdp: &mut PomdpConfig, value: f64) {
        pomdp.version = self.version();
        match self {
            SweepParam::PFlk => pomdp.p_flk = value,
            SweepParam::SigmaRn => pomdp.sigma_rn = value,
            SweepParam::PRsm => pomdp.p_rsm = value,
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").to_ascii_lowercase().as_str() {
            "p-flk" => Ok(SweepParam::PFlk),
            "sigma-rn" => Ok(SweepParam::SigmaRn),
            "p-rsm" => Ok(SweepParam::PRsm),
            other => Err(Error::Config(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

/// Best evaluation return of one seed at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityRow {
    pub param: SweepParam,
    pub value: f64,
    pub seed: u64,
    pub max_return: f64,
}

/// Maximum over evaluation points of the cross-seed mean at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservabilitySummary {
    pub param: SweepParam,
    pub value: f64,
    pub max_average_return: f64,
    pub std_at_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservabilityReport {
    pub rows: Vec<ObservabilityRow>,
    pub summary: Vec<ObservabilitySummary>,
}

/// Trains `base` once per grid value and seed under the matching corruption.
pub fn observability_sweep(
    base: &RunConfig,
    param: SweepParam,
    grid: &[f64],
) -> Result<ObservabilityReport> {
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &value in grid {
        let mut cfg = base.clone();
        param.apply(&mut cfg.pomdp, value);
        cfg.out_dir = base.out_dir.join(format!("{}-{value}", param.name()));
        let outcomes = run_training(&cfg)?;
        for o in &outcomes {
            let max_return = o
                .metrics
                .iter()
                .map(|m| m.avg_test_return)
                .fold(f64::NEG_INFINITY, f64::max);
            rows.push(ObservabilityRow {
                param,
                value,
                seed: o.seed,
                max_return,
            });
        }
        let labels = outcomes
            .iter()
            .map(|o| format!("seed-{}", o.seed))
            .collect();
        let runs: Vec<_> = outcomes.into_iter().map(|o| o.metrics).collect();
        let table = CurveTable::from_runs(labels, &runs)?;
        let (_, max_average_return, std_at_max) = table.max_average_return().ok_or_else(|| {
            Error::Config("observability sweep needs at least one evaluation point".into())
        })?;
        summary.push(ObservabilitySummary {
            param,
            value,
            max_average_return,
            std_at_max,
        });
    }
    Ok(ObservabilityReport { rows, summary })
}

/// Writes serializable rows as CSV with a header.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
