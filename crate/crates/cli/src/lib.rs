//! Command-line orchestration of gradient-flow runs: configuration, presets,
//! the simulate/monitor/verdict pipeline and artifact output.

pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;
pub mod presets;

pub use config::RunConfig;
pub use error::CliError;
