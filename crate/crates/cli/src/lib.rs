//! Command-line harness: run configuration, presets, engines, and artifact
//! emission for the beable engines.

pub mod artifacts;
pub mod config;
pub mod dump;
pub mod engine;
pub mod presets;
pub mod report;
pub mod svg;

pub use config::{Engine, RunConfig};
pub use engine::{execute, RunOutcome};
pub use report::RunReport;
