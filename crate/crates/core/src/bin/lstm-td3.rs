use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lstm_td3_core::agent::Variant;
use lstm_td3_core::env::EnvKind;
use lstm_td3_core::harness::{
    cross_evaluate_grid, emit_curves, evaluate_agent, history_length_sweep, load_checkpoint,
    observability_sweep, run_training, write_rows, SweepParam, TrainSettings,
    DEFAULT_EVAL_EPISODES,
};
use lstm_td3_core::pomdp::{PomdpConfig, PomdpVersion};
use lstm_td3_core::Result;

#[derive(Parser)]
#[command(
    name = "lstm-td3",
    version,
    about = "Recurrent actor-critic training and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one or more seeds and write metrics and checkpoints.
    Train(TrainArgs),
    /// Evaluate a checkpoint with the noiseless policy.
    Eval(EvalArgs),
    /// Evaluate checkpoints under other observation corruptions.
    CrossEval(CrossEvalArgs),
    /// Evaluate an lstm-td3 checkpoint with different history lengths.
    SweepHistory(SweepHistoryArgs),
    /// Train across a grid of corruption strengths.
    SweepObservability(SweepObservabilityArgs),
    /// Merge per-seed metrics into one learning-curve table.
    Curves(CurvesArgs),
}

#[derive(Args, Clone, Default)]
struct TrainArgs {
    /// Flat key-value file with the same keys as the flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algo: Option<Variant>,
    #[arg(long)]
    env: Option<EnvKind>,
    #[arg(long)]
    pomdp: Option<PomdpVersion>,
    #[arg(long)]
    p_flk: Option<f64>,
    #[arg(long)]
    sigma_rn: Option<f64>,
    #[arg(long)]
    p_rsm: Option<f64>,
    #[arg(long)]
    history_len: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated list of seeds; overrides --seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_dc: bool,
    #[arg(long)]
    no_tps: bool,
    #[arg(long)]
    no_cfe: bool,
    #[arg(long)]
    no_pa: bool,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    lr_actor: Option<f64>,
    #[arg(long)]
    lr_critic: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    sigma_act: Option<f64>,
    #[arg(long)]
    sigma_targ: Option<f64>,
    #[arg(long)]
    noise_clip: Option<f64>,
    #[arg(long)]
    policy_delay: Option<u64>,
    #[arg(long)]
    start_steps: Option<u64>,
    #[arg(long)]
    update_after: Option<u64>,
    #[arg(long)]
    replay_capacity: Option<usize>,
}

impl TrainArgs {
    fn settings(&self) -> Result<TrainSettings> {
        let flag = |b: bool| b.then_some(true);
        let cli = TrainSettings {
            algo: self.algo,
            env: self.env,
            pomdp: self.pomdp,
            p_flk: self.p_flk,
            sigma_rn: self.sigma_rn,
            p_rsm: self.p_rsm,
            history_len: self.history_len,
            seed: self.seed,
            seeds: self.seeds.clone(),
            steps: self.steps,
            eval_every: self.eval_every,
            eval_episodes: self.eval_episodes,
            out: self.out.clone(),
            no_dc: flag(self.no_dc),
            no_tps: flag(self.no_tps),
            no_cfe: flag(self.no_cfe),
            no_pa: flag(self.no_pa),
            gamma: self.gamma,
            tau: self.tau,
            lr_actor: self.lr_actor,
            lr_critic: self.lr_critic,
            batch_size: self.batch_size,
            sigma_act: self.sigma_act,
            sigma_targ: self.sigma_targ,
            noise_clip: self.noise_clip,
            policy_delay: self.policy_delay,
            start_steps: self.start_steps,
            update_after: self.update_after,
            replay_capacity: self.replay_capacity,
        };
        let base = match &self.config {
            Some(path) => TrainSettings::from_file(path)?,
            None => TrainSettings::default(),
        };
        Ok(base.overlaid_with(cli))
    }
}

#[derive(Args)]
struct CorruptionArgs {
    #[arg(long, default_value_t = 0.2)]
    p_flk: f64,
    #[arg(long, default_value_t = 0.1)]
    sigma_rn: f64,
    #[arg(long, default_value_t = 0.1)]
    p_rsm: f64,
}

impl CorruptionArgs {
    fn config(&self, version: PomdpVersion) -> PomdpConfig {
        PomdpConfig {
            version,
            p_flk: self.p_flk,
            sigma_rn: self.sigma_rn,
            p_rsm: self.p_rsm,
            ..PomdpConfig::default()
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Corruption to evaluate under; defaults to the one used for training.
    #[arg(long)]
    pomdp: Option<PomdpVersion>,
    #[command(flatten)]
    corruption: CorruptionArgs,
    #[arg(long, default_value_t = DEFAULT_EVAL_EPISODES)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// History length used while acting; defaults to the trained length.
    #[arg(long)]
    history_len: Option<usize>,
}

#[derive(Args)]
struct CrossEvalArgs {
    #[arg(long, required = true, num_args = 1..)]
    checkpoint: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "mdp,flk,rn,rsm")]
    eval_pomdp: Vec<PomdpVersion>,
    #[command(flatten)]
    corruption: CorruptionArgs,
    #[arg(long, default_value_t = DEFAULT_EVAL_EPISODES)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output; rows are printed when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepHistoryArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,1,3,5")]
    lengths: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_EVAL_EPISODES)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepObservabilityArgs {
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long, default_value = "p-flk")]
    param: SweepParam,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2,0.5,0.8")]
    grid: Vec<f64>,
}

#[derive(Args)]
struct CurvesArgs {
    #[arg(long, required = true, num_args = 1..)]
    metrics: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn print_rows<T: serde::Serialize>(rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(std::io::stdout());
    for r in rows {
        w.serialize(r)
            .map_err(|e| lstm_td3_core::Error::Config(e.to_string()))?;
    }
    w.flush()
        .map_err(|e| lstm_td3_core::Error::Config(e.to_string()))
}

fn emit<T: serde::Serialize>(rows: &[T], out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => write_rows(path, rows),
        None => print_rows(rows),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.settings()?.to_run_config()?;
            for o in run_training(&cfg)? {
                let best = o
                    .metrics
                    .iter()
                    .map(|m| m.avg_test_return)
                    .fold(f64::NEG_INFINITY, f64::max);
                println!(
                    "seed {}: {} evaluations, best return {best:.3}, outputs in {}",
                    o.seed,
                    o.metrics.len(),
                    o.dir.display()
                );
            }
        }
        Command::Eval(args) => {
            let (agent, meta) = load_checkpoint(&args.checkpoint)?;
            let env = meta.env.unwrap_or(EnvKind::Pendulum);
            let pomdp = match args.pomdp {
                Some(v) => args.corruption.config(v),
                None => meta.pomdp.clone().unwrap_or_default(),
            };
            let l = args.history_len.unwrap_or(agent.config().history_len);
            let r = evaluate_agent(&agent, env, &pomdp, args.episodes, args.seed, l)?;
            println!("mean_return,std_return,avg_q1");
            println!("{},{},{}", r.mean_return, r.std_return, r.avg_q1);
        }
        Command::CrossEval(args) => {
            let pomdps: Vec<_> = args
                .eval_pomdp
                .iter()
                .map(|&v| args.corruption.config(v))
                .collect();
            let rows = cross_evaluate_grid(&args.checkpoint, &pomdps, args.episodes, args.seed)?;
            emit(&rows, args.out.as_ref())?;
        }
        Command::SweepHistory(args) => {
            let rows =
                history_length_sweep(&args.checkpoint, &args.lengths, args.episodes, args.seed)?;
            emit(&rows, args.out.as_ref())?;
        }
        Command::SweepObservability(args) => {
            let cfg = args.train.settings()?.to_run_config()?;
            let report = observability_sweep(&cfg, args.param, &args.grid)?;
            write_rows(&cfg.out_dir.join("observability_rows.csv"), &report.rows)?;
            write_rows(
                &cfg.out_dir.join("observability_summary.csv"),
                &report.summary,
            )?;
            print_rows(&report.summary)?;
        }
        Command::Curves(args) => {
            let table = emit_curves(&args.metrics, &args.out)?;
            if let Some((step, mean, std)) = table.max_average_return() {
                println!("max average return {mean:.3} (std {std:.3}) at step {step}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
