//! Configuration, Monte Carlo experiments and CSV output.

pub mod config;
pub mod experiments;

pub use config::{load_config, parse_config, SimulationConfig};
pub use experiments::{
    lookup, nmse_db, run_experiment, trial_rng, write_csv, ExperimentKind, ExperimentResult, ExperimentSpec, FailureSummary,
    ResultRow, TrialRecord, CSV_HEADER, NMSE_FLOOR_DB,
};
