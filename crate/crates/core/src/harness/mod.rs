//! Experiment configuration, trial execution, cross-validated
//! hyper-parameter selection, sweep aggregation, timing comparisons, and
//! result emission.

pub mod config;
pub mod report;
pub mod sweep;
pub mod timing;
pub mod trial;

pub use config::{DatasetSource, ExperimentConfig, HyperGrids, LossChoice, ModelConfig, SweepAxis};
pub use report::{emit_results, format_cell, OutputFormat};
pub use sweep::{run_sweep, select_by_validation, HyperGroup, HyperPoint, SweepRow, SweepTable};
pub use timing::{time_iterations, TimingRow, TimingTable};
pub use trial::{prepare_data, run_trial, run_trial_model, PreparedData, TrialResult, TrialSetup};
