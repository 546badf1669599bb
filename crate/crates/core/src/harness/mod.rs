//! Experiment configuration, batch runs, file formats and the `mcsim` CLI.

pub mod cli;
pub mod config;
pub mod io;
pub mod run;

pub use config::{CheckToggles, ExperimentConfig, GraphSource};
pub use run::{analyze, run_checks, run_trial, run_trials, simulate, verify_dir, TrialRun, VerifyReport};
