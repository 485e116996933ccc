//! Scenario loading, experiment runs and on-disk artifacts.
//!
//! Per (scenario, law) a run writes `<scenario>_<law>.csv` (the trace),
//! `<scenario>_<law>_report.json` (excitation report) and
//! `<scenario>_<law>_summary.json`.

mod config;
mod run;
mod trace_io;

pub use config::{load_config, load_scenario, LawSelection, Overrides, RunConfig};
pub use run::{plant_bound, run_experiment, simulate, Bundle, Checkpoint, RunArtifacts, RunResult, Summary};
pub use trace_io::{format_value, read_csv, write_csv};
