//! Evaluation metrics, experiment orchestration and report tables.
//!
//! Every output file starts with a `# config_hash=… seed=…` comment line.

mod commands;
mod config;
mod experiment;
mod metrics;
mod report;
mod selftest;

pub use commands::{run_estimate, run_simulate, run_sweep, run_train};
pub use config::{
    BaselineSection, DataSection, EstimatorKind, EstimatorSection, EvalSection, ExperimentConfig, ExperimentSection,
    Preset, ResolvedConfig, Selection, SweepSection,
};
pub use experiment::{
    denoising_config, evaluate, fit_estimator, fit_roster, run_experiment, simulate_data, train_network, write_series_csv,
    Datasets, EstimatorResult, EvalReport, Fitted,
};
pub use metrics::{drift_error, relative_change, slice_points, squared_errors, visited_states, ErrorSeries};
pub use report::{rank_marks, relative_changes, render_csv, render_text, Mark, Summary};
pub use selftest::{selftest, Check};

#[cfg(test)]
mod tests;
