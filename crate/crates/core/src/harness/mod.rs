//! Run configuration, experiment execution with CSV metrics, parameter
//! sweeps and property-verification suites.

mod config;
mod run;
mod sweep;
pub mod verify;

pub use config::{ProblemConfig, RunConfig};
pub use run::{repeat_path, run, run_to_writer, RunRecord, RunSummary, Trainer, CSV_HEADER, DIVERGENCE_GROWTH};
pub use sweep::{sweep, CellResult, CellStatus, SweepGrid};
pub use verify::{verify, Check, Suite, VerifyReport};
