//! Plug-in MLE versus fully Bayesian inference on a single data split.
//!
//! The fully Bayesian model is too costly to replicate twenty times, so the
//! comparison runs once: the same training data and test set feed a
//! maximum-likelihood fit (closed-form intervals) and a
//! Metropolis-within-Gibbs posterior (highest-density intervals from pooled
//! predictive samples). Chain health is reported as per-parameter
//! Gelman-Rubin statistics; anything at or above 1.2 marks the run
//! non-convergent.

use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use mfgp::mcmc::{
    gelman_rubin, posterior_predict_many, run_mwg, BlockRates, McmcSchedule, ParamSelector,
    PriorSpec,
};
use mfgp::seeds::derive_seed;
use mfgp::{BasisSpec, EmulatorKind};

use crate::benchmark::{build_replication, fit_and_score};
use crate::config::ExperimentConfig;
use crate::metrics::{evaluate, Metrics, Prediction};
use crate::tags;

/// Convergence threshold on the potential scale reduction factor.
pub const GR_THRESHOLD: f64 = 1.2;

/// One parameter's Gelman-Rubin statistic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrEntry {
    pub parameter: String,
    pub value: f64,
    /// The within-chain variance vanished; `value` is a +infinity sentinel.
    pub degenerate: bool,
}

/// Full comparison report (JSON, schema-versioned).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub schema_version: u32,
    pub generated_unix: u64,
    pub function: String,
    pub config: ExperimentConfig,
    /// Metrics of the plug-in maximum-likelihood fit.
    pub mle: Metrics,
    /// Metrics of the fully Bayesian posterior predictive.
    pub bayes: Metrics,
    /// Per-parameter potential scale reduction factors.
    pub gelman_rubin: Vec<GrEntry>,
    /// Post-burn-in Metropolis acceptance rates, one entry per chain.
    pub acceptance: Vec<BlockRates>,
    /// True when every statistic is finite and below [`GR_THRESHOLD`].
    pub converged: bool,
}

impl CompareReport {
    /// Parameters whose statistic flags non-convergence.
    pub fn flagged(&self) -> Vec<&GrEntry> {
        self.gelman_rubin
            .iter()
            .filter(|e| e.degenerate || !(e.value < GR_THRESHOLD))
            .collect()
    }
}

/// Runs the comparison described by `config` (always on `config-k2`, the
/// one model the sampler supports).
pub fn run_compare(config: &ExperimentConfig) -> anyhow::Result<CompareReport> {
    config.validate()?;
    let function = config.test_function()?;
    let model = EmulatorKind::ConfigK2;

    // One training/testing split: replication 0 of the benchmark pipeline,
    // so the comparison sees exactly the data a benchmark replication sees.
    let replication =
        build_replication(config, function, 0).context("comparison split setup failed")?;
    let (mle_metrics, _) = fit_and_score(config, function, 0, &replication, model)
        .context("maximum-likelihood arm failed")?;

    let schedule = McmcSchedule {
        iterations: config.mcmc.iterations,
        burn_in: config.mcmc.burn_in,
        thinning: config.mcmc.thinning,
        chains: config.mcmc.chains,
        seed: derive_seed(config.seed, &[tags::MCMC]),
    };
    let chains = run_mwg(&replication.data, model, &PriorSpec::default(), &schedule)?;

    let p = replication.data.p();
    let q = replication.data.q();
    let m = BasisSpec::default_for(model).m(p, q);
    let mut selectors = Vec::new();
    selectors.extend((0..m).map(ParamSelector::Beta));
    selectors.extend((0..p).map(ParamSelector::Gamma));
    selectors.extend((0..p).map(ParamSelector::Alpha));
    selectors.extend((0..q).map(ParamSelector::Theta));
    selectors.push(ParamSelector::SigmaSq);
    selectors.push(ParamSelector::Lambda);
    let mut entries = Vec::with_capacity(selectors.len());
    for selector in selectors {
        let gr = gelman_rubin(&chains, selector)?;
        entries.push(GrEntry {
            parameter: selector.to_string(),
            value: gr.value,
            degenerate: gr.degenerate,
        });
    }
    let converged = entries.iter().all(|e| !e.degenerate && e.value < GR_THRESHOLD);

    let summaries = posterior_predict_many(
        &replication.data,
        &chains,
        &replication.test_inputs,
        config.mcmc.draws_per_sample,
        derive_seed(config.seed, &[tags::POSTERIOR]),
    )?;
    let predictions: Vec<Prediction> = summaries
        .iter()
        .map(|s| Prediction {
            mean: s.mean,
            std_err: sample_sd(&s.samples),
            lo95: s.interval95.0,
            hi95: s.interval95.1,
        })
        .collect();
    let bayes_metrics = evaluate(&replication.truth, &predictions);

    Ok(CompareReport {
        schema_version: 1,
        generated_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        function: function.as_str().to_owned(),
        config: config.clone(),
        mle: mle_metrics,
        bayes: bayes_metrics,
        gelman_rubin: entries,
        acceptance: chains.iter().map(|c| c.acceptance.clone()).collect(),
        converged,
    })
}

/// Sample standard deviation (n-1 denominator).
fn sample_sd(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    var.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use mfgp::testbed::TestFunction;

    #[test]
    fn smoke_comparison_on_a_tiny_schedule() {
        // Far below the production schedule: this checks plumbing (both
        // arms run, report fields populated), not chain convergence.
        let mut config = ExperimentConfig::for_function(TestFunction::Currin);
        config.design_size = 12;
        config.test_size = 25;
        config.restarts = 2;
        config.seed = 3;
        config.mcmc.iterations = 300;
        config.mcmc.burn_in = 150;
        config.mcmc.thinning = 15;
        config.mcmc.chains = 2;
        config.mcmc.draws_per_sample = 2;
        let report = run_compare(&config).unwrap();
        assert!(report.mle.mse.is_finite());
        assert!(report.bayes.mse.is_finite());
        assert!((0.0..=1.0).contains(&report.mle.coverage));
        assert!((0.0..=1.0).contains(&report.bayes.coverage));
        // beta (1+p+q = 5) + gamma (2) + alpha (2) + theta (2) + sigma + lambda
        assert_eq!(report.gelman_rubin.len(), 13);
        assert_eq!(report.acceptance.len(), 2);
        assert_eq!(report.converged, report.flagged().is_empty());

        let again = run_compare(&config).unwrap();
        assert_eq!(again.bayes.mse.to_bits(), report.bayes.mse.to_bits(), "comparison is seeded");
    }
}
