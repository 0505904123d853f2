//! Experiment configuration and run manifests.
//!
//! Configs are plain JSON. A run manifest embeds the full config plus the
//! derived per-trial seeds, so `run` accepts either file and reproduces the
//! same outputs.
//!
//! Seed scheme: trial seeds are `derive_seed(master_seed, stream)` where
//! `stream` is the trial index (magnitude sweeps use `magnitude_index *
//! 1_000_000 + trial`); within a trial, stream 0 seeds data sampling, stream 1
//! the solver, and stream 2 the split plan.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use mixmax_core::estimation::SplitMode;
use mixmax_core::solver::SolverConfig;

pub const KNOWN_EXPERIMENTS: &[&str] = &[
    "toy_ce_mirror",
    "toy_ce_shifted",
    "toy_regression_low",
    "toy_regression_high",
    "markov_magnitudes",
    "markov_split_comparison",
];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One of [`KNOWN_EXPERIMENTS`].
    pub experiment: String,
    #[serde(default)]
    pub family: FamilyParams,
    pub trials: usize,
    pub solver: SolverConfig,
    /// Split plans compared by `markov_split_comparison`.
    #[serde(default)]
    pub split_modes: Vec<SplitMode>,
    /// Weighting methods per trial: `mixmax`, `balanced`, `vertex:<i>`.
    #[serde(default = "default_baselines")]
    pub baselines: Vec<String>,
    /// Output directory (overridable by `--out` or `MIXMAX_OUT`).
    #[serde(default = "default_output")]
    pub output: String,
    pub master_seed: u64,
}

fn default_baselines() -> Vec<String> {
    vec!["mixmax".into(), "balanced".into()]
}

fn default_output() -> String {
    "results".into()
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyParams {
    /// Token vocabulary size (sequence experiments; default 4).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<usize>,
    /// Maximum sequence length (default 10).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_len: Option<usize>,
    /// Number of Markov chain groups (default 3).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<usize>,
    /// Dirichlet magnitudes swept by `markov_magnitudes` (default
    /// [1, 3, 5, 7, 10]).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitudes: Option<Vec<f64>>,
    /// Training samples per sequence length (default 800).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_length: Option<usize>,
    /// Held-out evaluation samples per sequence length (default 200).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_samples_per_length: Option<usize>,
    /// Samples per group for toy experiments (default 10000).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_group: Option<usize>,
    /// Transition smoothing for fitted proxies (default 0.5).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub version: String,
    pub timestamp: u64,
}

/// Load a config from either a bare config file or a run manifest.
pub fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("{} is not JSON", path.display()))?;
    let config_value = match value.get("config") {
        Some(inner) => inner.clone(),
        None => value,
    };
    let config: ExperimentConfig = serde_json::from_value(config_value)
        .with_context(|| format!("{} is not a valid experiment config", path.display()))?;
    validate(&config)?;
    Ok(config)
}

pub fn validate(config: &ExperimentConfig) -> anyhow::Result<()> {
    if !KNOWN_EXPERIMENTS.contains(&config.experiment.as_str()) {
        bail!(
            "unknown experiment '{}'; known: {}",
            config.experiment,
            KNOWN_EXPERIMENTS.join(", ")
        );
    }
    if config.trials == 0 {
        bail!("trials must be >= 1");
    }
    for name in &config.baselines {
        name.parse::<mixmax_core::baselines::Baseline>()
            .map_err(|e| anyhow::anyhow!("bad baseline entry: {e}"))?;
    }
    Ok(())
}
