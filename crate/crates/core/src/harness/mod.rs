//! Configuration, run modes and result files behind the `isac` CLI.
//!
//! A run is fully determined by its config and seed: trials draw from
//! per-index ChaCha streams, parallel results are collected in index order,
//! and wall times are only recorded on request.

mod config;
mod output;
mod runs;
mod validate;

pub use config::{dbm_to_watts, ArrayConfig, GeometryConfig, Mode, OptConfig, RfConfig, RunConfig, ScenarioConfig, Scheme};
pub use output::{fmt_float, to_csv, write_meta, write_outputs, ResultRecord, RunMeta, CSV_HEADER};
pub use runs::{
    design, draw_trial, dump_precoder_sdp, execute, heatmap_cells, montecarlo_trials, record_from_report, run_heatmap,
    run_montecarlo, run_solve, run_tradeoff, Command, RunOptions, RunSummary, TrialDraw, TrialOutcome,
};
pub use validate::{derivative_error, run_validate, schur_gap, CheckRow, ValidationReport};

/// Process exit codes of the CLI.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const INFEASIBLE: i32 = 3;
    pub const VALIDATION: i32 = 4;
    /// Anything else (I/O, solver breakdown).
    pub const OTHER: i32 = 1;
}

/// Exit code for an error surfaced by [`execute`].
pub fn exit_code_for(e: &crate::Error) -> i32 {
    match e {
        crate::Error::Config { .. } => exit_code::CONFIG,
        crate::Error::InfeasibleSecrecy { .. } => exit_code::INFEASIBLE,
        _ => exit_code::OTHER,
    }
}
