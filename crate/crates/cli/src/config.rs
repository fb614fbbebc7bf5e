//! TOML run configuration.
//!
//! Relative paths are resolved against the directory holding the config
//! file. The report embeds the configuration as written, so reports do not
//! depend on where the run happened.

use std::path::{Path, PathBuf};

use driftlab_core::synth::{EnvironmentSpec, NamedInstrument};
use driftlab_core::{BeerLambertParams, EvalConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<Format>>,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<InputConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorMode {
    #[default]
    BeerLambert,
    Passthrough,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default)]
    pub mode: EstimatorMode,
    /// Fallback parameters for sensors without a params file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<BeerLambertParams>,
    /// Fit parameters on each sensor's first days against the reference
    /// when no parameters are given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window_days: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub reference: ReferenceInput,
    pub sensors: Vec<SensorInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceInput {
    pub path: PathBuf,
    #[serde(default = "default_time")]
    pub time: String,
    #[serde(default = "default_reference_co2")]
    pub reference_co2: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorInput {
    pub id: String,
    pub path: PathBuf,
    #[serde(default = "default_time")]
    pub time: String,
    #[serde(default = "default_temperature")]
    pub temperature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ir_signal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor_co2: Option<String>,
    /// JSON file holding `{"i0", "alpha", "t_ref"}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Size of the default fleet; ignored when `instruments` is given.
    #[serde(default = "default_sensors")]
    pub sensors: usize,
    #[serde(default)]
    pub environment: EnvironmentSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruments: Option<Vec<NamedInstrument>>,
    /// Monte Carlo samples per oracle evaluation.
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            sensors: default_sensors(),
            environment: EnvironmentSpec::default(),
            instruments: None,
            mc_samples: default_mc_samples(),
        }
    }
}

fn default_time() -> String {
    "time".into()
}
fn default_reference_co2() -> String {
    "reference_co2".into()
}
fn default_temperature() -> String {
    "temperature".into()
}
fn default_sensors() -> usize {
    12
}
fn default_mc_samples() -> usize {
    20_000
}

/// A parsed config and the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base: PathBuf,
}

impl Loaded {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}

pub fn load(path: Option<&Path>) -> anyhow::Result<Loaded> {
    let Some(path) = path else {
        return Ok(Loaded {
            config: RunConfig::default(),
            base: PathBuf::from("."),
        });
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
    let config: RunConfig =
        toml::from_str(&text).map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))?;
    config
        .eval
        .validate()
        .map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))?;
    let base = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(Loaded { config, base })
}
