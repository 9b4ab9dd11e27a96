//! Scenario files, threshold sweeps and result tables.

pub mod checks;
mod config;
pub mod output;
mod sweep;

pub use config::{load_config, parse_config, Scenario};
pub use sweep::{run_sweep, SweepMode, SweepRow, SweepSpec, SweepVariable};
