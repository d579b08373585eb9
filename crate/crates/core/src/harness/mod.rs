//! Experiment engine: run configs, the optimizer x problem x schedule loop,
//! grid search, paper-style diagnostics, and deterministic CSV/JSON records.

pub mod checkpoint;
pub mod config;
pub mod metrics;
pub mod record;
pub mod runner;

pub use checkpoint::{Checkpoint, Section};
pub use config::{NsPreset, OptName, OptimizerSpec, ProblemSpec, RunConfig};
pub use metrics::{excessive_loss, excessive_loss_with_window, steps_to_threshold};
pub use record::{LogRow, ParamLog, RunMeta, RunRecord, RunSummary};
pub use runner::{grid_search, run_experiment, Experiment, GridOutcome, GridPoint};
