//! Self-describing fitted-model files.
//!
//! A fitted model is only meaningful together with its training data (the
//! predictor conditions on it), so the file stores a SHA-256 fingerprint of
//! the exact dataset bytes. Loading a model against different data is a
//! refusal, not a warning: predictions from a mismatched pair are silently
//! wrong in ways no downstream check can catch.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mfgp::mle::MleResult;
use mfgp::{BasisSpec, Dataset, EmulatorKind, KernelParams, Predictor};

/// Fitted-model file contents (JSON, schema-versioned).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FittedModel {
    /// File-format version.
    pub schema_version: u32,
    /// Emulator variant.
    pub model: EmulatorKind,
    /// Regression basis of the mean.
    pub basis: BasisSpec,
    /// Fitted parameters, `beta` included.
    pub params: KernelParams,
    /// Profiled log-likelihood at the optimum.
    pub log_likelihood: f64,
    /// Convergence flag of each optimizer start.
    pub converged: Vec<bool>,
    /// Whether the informed initialization saw (numerically) constant
    /// responses.
    pub degenerate_init: bool,
    /// Training-data shape.
    pub p: usize,
    /// Number of fidelity parameters.
    pub q: usize,
    /// Number of training runs.
    pub n: usize,
    /// SHA-256 of the canonical training-data bytes.
    pub data_fingerprint: String,
    /// Diagonal jitter the training-covariance factorization needed.
    pub jitter: f64,
}

/// SHA-256 over the dataset's canonical byte layout: `p`, `q`, `n` as
/// little-endian u64, then the input, fidelity, and response values as
/// little-endian IEEE-754 bits, row-major. Any bit-level change to the data
/// changes the digest.
pub fn data_fingerprint(data: &Dataset) -> String {
    let mut hasher = Sha256::new();
    for dim in [data.p(), data.q(), data.n()] {
        hasher.update((dim as u64).to_le_bytes());
    }
    for i in 0..data.n() {
        for v in data.x(i) {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    for i in 0..data.n() {
        for v in data.t(i) {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    for v in data.y() {
        hasher.update(v.to_bits().to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

impl FittedModel {
    /// Packages a maximum-likelihood fit. The predictor is fitted once here
    /// to record the covariance jitter the parameters induce on this data.
    pub fn from_fit(data: &Dataset, model: EmulatorKind, fit: &MleResult) -> anyhow::Result<FittedModel> {
        let predictor = Predictor::fit(data, &fit.params, model, Some(fit.basis))?;
        Ok(FittedModel {
            schema_version: 1,
            model,
            basis: fit.basis,
            params: fit.params.clone(),
            log_likelihood: fit.log_likelihood,
            converged: fit.converged.clone(),
            degenerate_init: fit.degenerate_init,
            p: data.p(),
            q: data.q(),
            n: data.n(),
            data_fingerprint: data_fingerprint(data),
            jitter: predictor.jitter(),
        })
    }

    /// Writes the model as pretty JSON.
    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self).context("cannot serialize model")?;
        fs::write(path, text + "\n")
            .with_context(|| format!("cannot write model file {}", path.display()))?;
        Ok(())
    }

    /// Reads a model file.
    pub fn load(path: &Path) -> anyhow::Result<FittedModel> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read model file {}", path.display()))?;
        let model: FittedModel = serde_json::from_str(&text)
            .with_context(|| format!("model file {} does not match the schema", path.display()))?;
        if model.schema_version != 1 {
            bail!(
                "model file {} has schema version {}, this build reads version 1",
                path.display(),
                model.schema_version
            );
        }
        Ok(model)
    }

    /// Checks that `data` is byte-identical to the training data this model
    /// was fitted on, and rebuilds the predictor.
    pub fn predictor_for(&self, data: &Dataset) -> anyhow::Result<Predictor> {
        let found = data_fingerprint(data);
        if found != self.data_fingerprint {
            bail!(
                "training data mismatch: the model was fitted on data with fingerprint {}..., \
                 but the supplied dataset hashes to {}... ({} runs, p = {}, q = {}). A fitted \
                 model conditions on its exact training set; re-fit or supply the original CSV.",
                &self.data_fingerprint[..12],
                &found[..12],
                data.n(),
                data.p(),
                data.q()
            );
        }
        Ok(Predictor::fit(data, &self.params, self.model, Some(self.basis))?)
    }
}
