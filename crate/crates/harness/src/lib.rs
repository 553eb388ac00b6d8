//! Experiment harness: configuration, the scheme registry, training and
//! evaluation runs, sweeps, timing and CSV export.

pub mod agents;
pub mod bench;
pub mod config;
pub mod error;
pub mod export;
pub mod run;
pub mod scheme;
pub mod stats;
pub mod suite;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use run::{run_scheme, run_scheme_seed, run_seeds, RunOutput, RunReport};
pub use scheme::Scheme;
pub use stats::mode_histogram;
pub use sweep::{sweep, SweepParam};
