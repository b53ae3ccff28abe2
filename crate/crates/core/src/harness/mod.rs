//! Experiment plumbing: configuration, the train/eval loop, metrics files,
//! learning-curve plots, checkpoints, sweeps and verification suites.

pub mod checkpoint;
pub mod config;
pub mod metrics;
pub mod oracle;
pub mod plot;
pub mod sweep;
pub mod train;
pub mod verify;

pub use checkpoint::{Checkpoint, CheckpointMeta, FORMAT_VERSION};
pub use config::{load_config, parse_entries, RunConfig, Scale};
pub use metrics::{read_metrics, MetricsRow, MetricsWriter};
pub use plot::{emit_plot, render_svg};
pub use sweep::{grid, run_sweep, SweepPoint};
pub use train::{evaluate, evaluate_actors, rollout, train, EvalResult, TrainSummary};
pub use verify::{run_suite, CriterionResult, Suite, VerifyOptions, VerifyReport};
