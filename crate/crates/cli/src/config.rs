use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

/// Settings accepted from `--config file.toml`. Keys mirror the long flag
/// names with `-` replaced by `_`; any flag given on the command line wins.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub bins: Option<usize>,
    pub precision: Option<u32>,
    pub epsilon: Option<f64>,
    pub counter: Option<String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,

    pub nc: Option<usize>,
    pub nu: Option<usize>,
    pub max_iterations: Option<usize>,
    pub exhaustive: Option<bool>,

    pub rules: Option<usize>,
    pub cat: Option<usize>,
    pub num: Option<usize>,
    pub events: Option<usize>,
    pub ops: Option<String>,
    pub trace_len: Option<(usize, usize)>,
    pub domain: Option<usize>,
    pub target: Option<String>,
    pub noise: Option<f64>,

    pub input: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub trace_scores: Option<PathBuf>,
    pub stats: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub out_gt: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| crate::UsageError(format!("config {}: {e}", path.display())).into())
    }
}

/// Flag if given, else the config value, else the default.
pub fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}
