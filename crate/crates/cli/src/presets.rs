//! Scenario presets shipped with the binary.

use crate::config::RunConfig;
use crate::error::CliError;

pub const PRESETS: [(&str, &str); 5] = [
    ("quadratic-gaussian", include_str!("../presets/quadratic-gaussian.toml")),
    ("bistable-balanced-collapse", include_str!("../presets/bistable-balanced-collapse.toml")),
    ("tilted-bistable-subcritical", include_str!("../presets/tilted-bistable-subcritical.toml")),
    ("tilted-bistable-supercritical", include_str!("../presets/tilted-bistable-supercritical.toml")),
    ("vector-double-well", include_str!("../presets/vector-double-well.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset(name: &str) -> Result<RunConfig, CliError> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| CliError::Config(format!("unknown preset '{name}'")))?;
    RunConfig::from_toml(text)
}
