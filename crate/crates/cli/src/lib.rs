//! Command-line harness around `casimir-lab`: preset experiments configured
//! from JSON, with CSV/JSON/binary output.

pub mod config;
pub mod output;
pub mod presets;
