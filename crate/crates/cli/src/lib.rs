//! Library half of the `mfgp` command-line tool.
//!
//! Everything the binary does lives here so integration tests can drive the
//! same code paths without spawning processes: experiment configuration,
//! fitted-model files, prediction metrics, the replicated benchmark harness,
//! and the MLE-versus-Bayes comparison.

pub mod benchmark;
pub mod compare;
pub mod config;
pub mod kernelgrid;
pub mod metrics;
pub mod modelfile;

/// Seed-derivation tags for the experiment pipeline. Each (purpose,
/// replication[, model]) combination gets an independent deterministic
/// stream from the master seed, so adding models or reordering them never
/// shifts anyone else's randomness.
pub mod tags {
    /// Space-filling design of a replication.
    pub const DESIGN: u64 = 0x11;
    /// Test-input sampling of a replication.
    pub const TEST: u64 = 0x12;
    /// Maximum-likelihood restarts (also tagged by stable model index).
    pub const FIT: u64 = 0x13;
    /// High-fidelity baseline design of a replication.
    pub const HF_DESIGN: u64 = 0x14;
    /// MCMC chain scheduling.
    pub const MCMC: u64 = 0x15;
    /// Posterior predictive sampling.
    pub const POSTERIOR: u64 = 0x16;
}

/// Stable per-model tag: the model's position in the fixed reporting order,
/// independent of its position in a config's model list.
pub fn model_tag(model: mfgp::EmulatorKind) -> u64 {
    mfgp::EmulatorKind::ALL
        .iter()
        .position(|k| *k == model)
        .expect("every kind is in ALL") as u64
}
