//! Experiment configuration for the benchmark and comparison commands.
//!
//! The file format is JSON with every field optional except `function`;
//! defaults reproduce the synthetic-experiment protocol (50-run MaxPro
//! design over the joint input-fidelity space, 1,000 random test inputs,
//! 20 replications, exponents fixed at 2). Unknown fields are structural
//! errors, not warnings: a typo in a config must never silently run a
//! different experiment.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use mfgp::testbed::TestFunction;
use mfgp::EmulatorKind;

/// How predictive distributions are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceMode {
    /// Plug-in maximum likelihood with closed-form intervals.
    Mle,
    /// Fully Bayesian posterior predictive via MCMC.
    Bayes,
}

/// MCMC schedule settings (used by `mcmc-compare`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSettings {
    /// Iterations per chain.
    pub iterations: usize,
    /// Leading iterations discarded per chain.
    pub burn_in: usize,
    /// Keep every `thinning`-th post-burn-in state.
    pub thinning: usize,
    /// Number of independent chains.
    pub chains: usize,
    /// Normal predictive samples drawn per retained posterior draw per
    /// test input.
    pub draws_per_sample: usize,
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings { iterations: 10_000, burn_in: 5_000, thinning: 50, chains: 5, draws_per_sample: 4 }
    }
}

/// Full description of one replicated synthetic experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Synthetic test function: `currin` (2 inputs) or `park` (4 inputs).
    pub function: String,
    /// Training-design size over the joint input-fidelity space.
    #[serde(default = "default_design_size")]
    pub design_size: usize,
    /// Fidelity range `[lo, hi]` applied to every fidelity column; defaults
    /// per function (currin `[0.1, 0.4]`, park `[0.2, 0.5]`).
    #[serde(default)]
    pub fidelity_range: Option<(f64, f64)>,
    /// Number of random test inputs per replication.
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    /// Number of replications.
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Models to fit, by kebab-case name; defaults to the five
    /// multi-fidelity emulators.
    #[serde(default = "default_models")]
    pub models: Vec<String>,
    /// Outer exponent of the Brownian-type kernels.
    #[serde(default = "default_l")]
    pub l: f64,
    /// Per-coordinate exponents of the bracketed-min-sum kernel; `null`
    /// means 2 everywhere.
    #[serde(default)]
    pub l_r: Option<Vec<f64>>,
    /// Inference mode; the benchmark supports `mle` only (`bayes` runs via
    /// the `mcmc-compare` command).
    #[serde(default = "default_inference")]
    pub inference: InferenceMode,
    /// Maximum-likelihood restarts per fit.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// MCMC schedule for `mcmc-compare`.
    #[serde(default)]
    pub mcmc: McmcSettings,
    /// Design size of the single-fidelity baseline (only used when the
    /// model list includes `high-fidelity-gp`).
    #[serde(default = "default_hf_design_size")]
    pub hf_design_size: usize,
    /// Fidelity value (every dimension) at which the single-fidelity
    /// baseline's training data is simulated.
    #[serde(default = "default_hf_fidelity")]
    pub hf_fidelity: f64,
    /// Master seed; every replication, fit, and sampler derives its own
    /// stream from it.
    #[serde(default)]
    pub seed: u64,
}

fn default_design_size() -> usize {
    50
}
fn default_test_size() -> usize {
    1000
}
fn default_replications() -> usize {
    20
}
fn default_models() -> Vec<String> {
    ["standard-gp", "twy-arith", "twy-geom", "config-k1", "config-k2"]
        .into_iter()
        .map(str::to_owned)
        .collect()
}
fn default_l() -> f64 {
    2.0
}
fn default_inference() -> InferenceMode {
    InferenceMode::Mle
}
fn default_restarts() -> usize {
    5
}
fn default_hf_design_size() -> usize {
    8
}
fn default_hf_fidelity() -> f64 {
    0.0125
}

impl ExperimentConfig {
    /// A config with every default filled in for the given function.
    pub fn for_function(function: TestFunction) -> ExperimentConfig {
        serde_json::from_str(&format!("{{\"function\": \"{function}\"}}"))
            .expect("the minimal config is valid")
    }

    /// Loads and validates a JSON config file.
    pub fn load(path: &Path) -> anyhow::Result<ExperimentConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .with_context(|| format!("config {} does not match the schema", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    /// The parsed test function.
    pub fn test_function(&self) -> anyhow::Result<TestFunction> {
        Ok(self.function.parse::<TestFunction>()?)
    }

    /// The parsed model list, in config order.
    pub fn model_list(&self) -> anyhow::Result<Vec<EmulatorKind>> {
        self.models
            .iter()
            .map(|name| Ok(name.parse::<EmulatorKind>()?))
            .collect()
    }

    /// The fidelity range, falling back to the per-function default.
    pub fn fidelity_range_for(&self, function: TestFunction) -> (f64, f64) {
        self.fidelity_range.unwrap_or(match function {
            TestFunction::Currin => (0.1, 0.4),
            TestFunction::Park => (0.2, 0.5),
        })
    }

    /// Structural validation beyond what serde enforces.
    pub fn validate(&self) -> anyhow::Result<()> {
        let function = self.test_function()?;
        let models = self.model_list()?;
        if models.is_empty() {
            bail!("the model list must not be empty");
        }
        if self.design_size < 3 {
            bail!("design_size must be at least 3, got {}", self.design_size);
        }
        if self.test_size == 0 {
            bail!("test_size must be positive");
        }
        if self.replications == 0 {
            bail!("replications must be positive");
        }
        if self.restarts == 0 {
            bail!("restarts must be positive");
        }
        let (lo, hi) = self.fidelity_range_for(function);
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
            bail!("fidelity range must satisfy 0 < lo < hi, got [{lo}, {hi}]");
        }
        if !(self.l.is_finite() && self.l > 0.0) {
            bail!("l must be positive, got {}", self.l);
        }
        if let Some(l_r) = &self.l_r {
            if l_r.len() != function.p() {
                bail!(
                    "l_r needs one exponent per fidelity parameter ({} for {function}), got {}",
                    function.p(),
                    l_r.len()
                );
            }
            if l_r.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                bail!("every l_r exponent must be positive");
            }
        }
        if !(self.hf_fidelity.is_finite() && self.hf_fidelity > 0.0) {
            bail!("hf_fidelity must be positive, got {}", self.hf_fidelity);
        }
        if self.hf_design_size < 3 && models.contains(&EmulatorKind::HighFidelityGp) {
            bail!("hf_design_size must be at least 3, got {}", self.hf_design_size);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_protocol_defaults() {
        let config: ExperimentConfig = serde_json::from_str(r#"{"function": "currin"}"#).unwrap();
        config.validate().unwrap();
        assert_eq!(config.design_size, 50);
        assert_eq!(config.test_size, 1000);
        assert_eq!(config.replications, 20);
        assert_eq!(config.l, 2.0);
        assert_eq!(config.restarts, 5);
        assert_eq!(config.seed, 0);
        assert_eq!(config.inference, InferenceMode::Mle);
        assert_eq!(config.mcmc, McmcSettings::default());
        assert_eq!(
            config.model_list().unwrap(),
            vec![
                EmulatorKind::StandardGp,
                EmulatorKind::TwyArith,
                EmulatorKind::TwyGeom,
                EmulatorKind::ConfigK1,
                EmulatorKind::ConfigK2,
            ]
        );
        assert_eq!(config.fidelity_range_for(TestFunction::Currin), (0.1, 0.4));
        let park = ExperimentConfig::for_function(TestFunction::Park);
        assert_eq!(park.fidelity_range_for(TestFunction::Park), (0.2, 0.5));
    }

    #[test]
    fn unknown_fields_and_bad_values_are_structural_errors() {
        let err = serde_json::from_str::<ExperimentConfig>(r#"{"function": "currin", "nreps": 3}"#);
        assert!(err.is_err(), "unknown field must be rejected");

        let config: ExperimentConfig =
            serde_json::from_str(r#"{"function": "currin", "models": []}"#).unwrap();
        assert!(config.validate().is_err(), "empty model list must be rejected");

        let config: ExperimentConfig =
            serde_json::from_str(r#"{"function": "currin", "models": ["cokriging"]}"#).unwrap();
        assert!(config.validate().is_err(), "unknown model name must be rejected");

        let config: ExperimentConfig =
            serde_json::from_str(r#"{"function": "currin", "fidelity_range": [0.4, 0.1]}"#).unwrap();
        assert!(config.validate().is_err(), "inverted fidelity range must be rejected");

        let config: ExperimentConfig =
            serde_json::from_str(r#"{"function": "currin", "l_r": [2.0]}"#).unwrap();
        assert!(config.validate().is_err(), "l_r length must match the fidelity count");
    }

    #[test]
    fn config_round_trips_through_json() {
        let mut config = ExperimentConfig::for_function(TestFunction::Currin);
        config.replications = 3;
        config.seed = 99;
        let text = serde_json::to_string_pretty(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, config);
    }
}
