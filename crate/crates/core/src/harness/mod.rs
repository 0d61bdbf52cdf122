//! Training loop, evaluation protocols, checkpoints and learning curves.

mod checkpoint;
mod config;
mod curves;
mod eval;
mod protocols;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint,
    CheckpointMeta, CHECKPOINT_VERSION,
};
pub use config::{RunConfig, TrainSettings, DEFAULT_EVAL_EPISODES, DEFAULT_EVAL_EVERY};
pub use curves::{emit_curves, CurveTable};
pub use eval::{evaluate_agent, evaluate_policy, mean_std, EvalReport, MemoryStats, Policy};
pub use protocols::{
    cross_evaluate, cross_evaluate_grid, history_length_sweep, observability_sweep, write_rows,
    CrossEvalRow, HistoryRow, ObservabilityReport, ObservabilityRow, ObservabilitySummary,
    SweepParam, HISTORY_LENGTHS, P_FLK_GRID, SAME_WIDTH_VERSIONS,
};
pub use train::{
    read_metrics, run_training, train_seed, MetricsRow, TrainOutcome, CHECKPOINT_FILE,
    CONFIG_ECHO_FILE, METRICS_FILE, TIMING_FILE,
};
