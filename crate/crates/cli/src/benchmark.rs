//! Replicated synthetic benchmark over the multi-fidelity test functions.
//!
//! Per replication: a MaxPro design over the joint input-fidelity space,
//! training data simulated by grid interpolation, every configured model
//! fitted by maximum likelihood, and predictions of the exact response at
//! freshly sampled random test inputs (target fidelity 0) scored by MSE,
//! empirical 95% coverage, and average standard error. Replications run in
//! a worker pool; every random stream is derived from the master seed and a
//! purpose tag, so results are independent of scheduling and of the order
//! models appear in the config.

use std::io::Write;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use mfgp::design::{self, AnnealSchedule, ColumnRole, Design};
use mfgp::mle::{fit_mle, MleOptions};
use mfgp::seeds::{derive_rng, derive_seed};
use mfgp::testbed::{grid_interpolate, TestFunction};
use mfgp::{Dataset, EmulatorKind, Predictor, UqMode};
use rand::Rng;

use crate::config::{ExperimentConfig, InferenceMode};
use crate::metrics::{evaluate, Metrics, Prediction};
use crate::{model_tag, tags};

/// One model's outcome on one replication.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepRow {
    pub model: EmulatorKind,
    pub replication: usize,
    /// Prediction metrics; `None` when the fit failed.
    pub metrics: Option<Metrics>,
    /// Wall-clock fit time. Excluded from reproducibility comparisons: it
    /// measures the machine, not the experiment.
    pub fit_seconds: f64,
    /// Diagonal jitter the training-covariance factorization needed.
    pub jitter: f64,
    /// Fit-failure message, if any.
    pub error: Option<String>,
}

/// Arithmetic means of one model's per-replication metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelAggregate {
    pub model: EmulatorKind,
    /// Replications that produced metrics.
    pub successes: usize,
    /// Replications whose fit failed.
    pub failures: usize,
    /// Averages over the successful replications; `None` when all failed.
    pub metrics: Option<Metrics>,
    /// Average wall-clock fit time (successful replications).
    pub avg_fit_seconds: f64,
}

/// Everything one benchmark run produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkOutput {
    pub function: String,
    /// Rows sorted by (replication, reporting order).
    pub rows: Vec<RepRow>,
    /// Aggregates in reporting order.
    pub aggregates: Vec<ModelAggregate>,
}

impl BenchmarkOutput {
    /// The aggregate entry for one model, if it was configured.
    pub fn aggregate(&self, model: EmulatorKind) -> Option<&ModelAggregate> {
        self.aggregates.iter().find(|a| a.model == model)
    }
}

/// Training data of one replication: the joint-space design plus simulated
/// responses, and the shared test set.
pub(crate) struct Replication {
    pub(crate) data: Dataset,
    pub(crate) test_inputs: Vec<Vec<f64>>,
    pub(crate) truth: Vec<f64>,
}

/// Builds the joint MaxPro design (inputs in the unit cube, fidelities
/// mapped to the configured range) and simulates training responses.
pub(crate) fn build_replication(
    config: &ExperimentConfig,
    function: TestFunction,
    rep: usize,
) -> anyhow::Result<Replication> {
    let p = function.p();
    let q = p;
    let design_seed = derive_seed(config.seed, &[tags::DESIGN, rep as u64]);
    let joint = design::maxpro(config.design_size, p + q, design_seed, &AnnealSchedule::default());
    let mut roles = vec![ColumnRole::Input; p];
    roles.extend(std::iter::repeat(ColumnRole::Fidelity).take(q));
    let joint = joint.with_roles(roles)?;
    let (lo, hi) = config.fidelity_range_for(function);
    let mut ranges = vec![(0.0, 1.0); p];
    ranges.extend(std::iter::repeat((lo, hi)).take(q));
    let joint = design::map_ranges(&joint, &ranges)?;

    let data = simulate_design(function, &joint)?;

    let mut rng = derive_rng(config.seed, &[tags::TEST, rep as u64]);
    let mut test_inputs = Vec::with_capacity(config.test_size);
    let mut truth = Vec::with_capacity(config.test_size);
    for _ in 0..config.test_size {
        let x: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
        truth.push(function.eval(&x)?);
        test_inputs.push(x);
    }
    Ok(Replication { data, test_inputs, truth })
}

/// Runs the simulator at every design row and assembles the dataset.
pub fn simulate_design(function: TestFunction, design: &Design) -> anyhow::Result<Dataset> {
    let mut xs = Vec::new();
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    let mut p = None;
    for i in 0..design.n() {
        let (x, t) = design.split_row(i);
        ys.push(grid_interpolate(function, &t, &x)?);
        p = Some(x.len());
        xs.extend(x);
        ts.extend(t);
    }
    let p = p.context("empty design")?;
    let q = ts.len() / design.n();
    Ok(Dataset::new(p, q, xs, ts, ys)?)
}

/// Fits one model on the replication and scores its predictions.
fn run_model(
    config: &ExperimentConfig,
    function: TestFunction,
    rep: usize,
    replication: &Replication,
    model: EmulatorKind,
) -> RepRow {
    let started = Instant::now();
    let outcome = fit_and_score(config, function, rep, replication, model);
    let fit_seconds = started.elapsed().as_secs_f64();
    match outcome {
        Ok((metrics, jitter)) => RepRow {
            model,
            replication: rep,
            metrics: Some(metrics),
            fit_seconds,
            jitter,
            error: None,
        },
        Err(err) => RepRow {
            model,
            replication: rep,
            metrics: None,
            fit_seconds,
            jitter: f64::NAN,
            error: Some(format!("{err:#}")),
        },
    }
}

pub(crate) fn fit_and_score(
    config: &ExperimentConfig,
    function: TestFunction,
    rep: usize,
    replication: &Replication,
    model: EmulatorKind,
) -> anyhow::Result<(Metrics, f64)> {
    // The single-fidelity baseline gets its own small design, simulated at
    // one fine fidelity; everything else trains on the joint-space data.
    let hf_data;
    let data = if model == EmulatorKind::HighFidelityGp {
        hf_data = build_hf_data(config, function, rep)?;
        &hf_data
    } else {
        &replication.data
    };
    let options = MleOptions {
        restarts: config.restarts,
        seed: derive_seed(config.seed, &[tags::FIT, rep as u64, model_tag(model)]),
        l: config.l,
        l_r: config.l_r.clone(),
        ..MleOptions::default()
    };
    let fit = fit_mle(data, model, &options)?;
    let predictor = Predictor::fit(data, &fit.params, model, Some(fit.basis))?;
    let mut predictions = Vec::with_capacity(replication.test_inputs.len());
    for x in &replication.test_inputs {
        let dist = predictor.predict(x, UqMode::BasisAdjusted)?;
        predictions.push(Prediction {
            mean: dist.mean,
            std_err: dist.variance.sqrt(),
            lo95: dist.interval95.0,
            hi95: dist.interval95.1,
        });
    }
    Ok((evaluate(&replication.truth, &predictions), predictor.jitter()))
}

/// Small input-space MaxPro design simulated at the configured fine
/// fidelity, standing in for cost-matched high-fidelity runs.
fn build_hf_data(
    config: &ExperimentConfig,
    function: TestFunction,
    rep: usize,
) -> anyhow::Result<Dataset> {
    let p = function.p();
    let seed = derive_seed(config.seed, &[tags::HF_DESIGN, rep as u64]);
    let hf = design::maxpro(config.hf_design_size, p, seed, &AnnealSchedule::default());
    let t = vec![config.hf_fidelity; p];
    let mut xs = Vec::new();
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for i in 0..hf.n() {
        let x = hf.row(i).to_vec();
        ys.push(grid_interpolate(function, &t, &x)?);
        xs.extend(x);
        ts.extend(t.iter().copied());
    }
    Ok(Dataset::new(p, p, xs, ts, ys)?)
}

/// Runs the full benchmark described by `config`.
pub fn run_benchmark(config: &ExperimentConfig) -> anyhow::Result<BenchmarkOutput> {
    config.validate()?;
    if config.inference != InferenceMode::Mle {
        bail!("the benchmark fits by maximum likelihood; use `mcmc-compare` for the Bayesian path");
    }
    let function = config.test_function()?;
    let models = config.model_list()?;

    let mut rows: Vec<RepRow> = (0..config.replications)
        .into_par_iter()
        .map(|rep| -> anyhow::Result<Vec<RepRow>> {
            let replication = build_replication(config, function, rep)
                .with_context(|| format!("replication {rep} setup failed"))?;
            Ok(models
                .iter()
                .map(|&model| run_model(config, function, rep, &replication, model))
                .collect())
        })
        .collect::<anyhow::Result<Vec<Vec<RepRow>>>>()?
        .into_iter()
        .flatten()
        .collect();
    rows.sort_by_key(|r| (r.replication, model_tag(r.model)));

    let mut aggregates = Vec::new();
    let mut ordered = models.clone();
    ordered.sort_by_key(|&m| model_tag(m));
    ordered.dedup();
    for model in ordered {
        let entries: Vec<&RepRow> = rows.iter().filter(|r| r.model == model).collect();
        let ok: Vec<&RepRow> = entries.iter().filter(|r| r.metrics.is_some()).copied().collect();
        let count = ok.len();
        let metrics = (count > 0).then(|| {
            let scale = 1.0 / count as f64;
            Metrics {
                mse: ok.iter().map(|r| r.metrics.unwrap().mse).sum::<f64>() * scale,
                coverage: ok.iter().map(|r| r.metrics.unwrap().coverage).sum::<f64>() * scale,
                avg_std_err: ok.iter().map(|r| r.metrics.unwrap().avg_std_err).sum::<f64>() * scale,
            }
        });
        let avg_fit_seconds = if count > 0 {
            ok.iter().map(|r| r.fit_seconds).sum::<f64>() / count as f64
        } else {
            0.0
        };
        aggregates.push(ModelAggregate {
            model,
            successes: count,
            failures: entries.len() - count,
            metrics,
            avg_fit_seconds,
        });
    }
    Ok(BenchmarkOutput { function: function.as_str().to_owned(), rows, aggregates })
}

/// Minimal CSV field quoting: wrap when the text holds a delimiter, quote,
/// or newline, doubling interior quotes.
fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_owned()
    }
}

/// Writes the per-replication rows as CSV.
pub fn write_rows_csv<W: Write>(rows: &[RepRow], mut w: W) -> anyhow::Result<()> {
    writeln!(w, "model,replication,mse,coverage,avg_std_err,fit_seconds,jitter,error")?;
    for row in rows {
        let (mse, coverage, avg_se) = match row.metrics {
            Some(m) => (m.mse.to_string(), m.coverage.to_string(), m.avg_std_err.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            row.model,
            row.replication,
            mse,
            coverage,
            avg_se,
            row.fit_seconds,
            if row.jitter.is_nan() { String::new() } else { row.jitter.to_string() },
            csv_field(row.error.as_deref().unwrap_or("")),
        )?;
    }
    Ok(())
}

/// Aggregate report: schema-versioned JSON carrying the config echo, the
/// per-model averages, and a generation timestamp (the one field excluded
/// from reproducibility comparisons, together with wall-clock times).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateReport {
    pub schema_version: u32,
    pub generated_unix: u64,
    pub function: String,
    pub config: ExperimentConfig,
    pub aggregates: Vec<ModelAggregate>,
}

impl AggregateReport {
    pub fn new(config: &ExperimentConfig, output: &BenchmarkOutput) -> AggregateReport {
        AggregateReport {
            schema_version: 1,
            generated_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            function: output.function.clone(),
            config: config.clone(),
            aggregates: output.aggregates.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        let mut config = ExperimentConfig::for_function(TestFunction::Currin);
        config.design_size = 14;
        config.test_size = 40;
        config.replications = 2;
        config.restarts = 2;
        config.models = vec!["standard-gp".into(), "config-k2".into()];
        config.seed = 7;
        config
    }

    #[test]
    fn tiny_benchmark_is_deterministic_and_complete() {
        let config = tiny_config();
        let a = run_benchmark(&config).unwrap();
        let b = run_benchmark(&config).unwrap();
        assert_eq!(a.rows.len(), 4, "2 models x 2 replications");
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.model, rb.model);
            assert_eq!(ra.replication, rb.replication);
            let (ma, mb) = (ra.metrics.unwrap(), rb.metrics.unwrap());
            assert_eq!(ma.mse.to_bits(), mb.mse.to_bits(), "bit-identical MSE");
            assert_eq!(ma.coverage.to_bits(), mb.coverage.to_bits());
            assert_eq!(ma.avg_std_err.to_bits(), mb.avg_std_err.to_bits());
            assert_eq!(ra.jitter.to_bits(), rb.jitter.to_bits());
        }
        for agg in &a.aggregates {
            let m = agg.metrics.expect("all fits succeed on the tiny config");
            assert!(m.mse >= 0.0 && m.mse.is_finite());
            assert!((0.0..=1.0).contains(&m.coverage));
            assert!(m.avg_std_err >= 0.0);
            assert_eq!(agg.successes, 2);
            assert_eq!(agg.failures, 0);
        }
    }

    #[test]
    fn model_order_does_not_change_numbers() {
        let mut config = tiny_config();
        config.replications = 1;
        let forward = run_benchmark(&config).unwrap();
        config.models.reverse();
        let reversed = run_benchmark(&config).unwrap();
        for model in [EmulatorKind::StandardGp, EmulatorKind::ConfigK2] {
            let a = forward.aggregate(model).unwrap().metrics.unwrap();
            let b = reversed.aggregate(model).unwrap().metrics.unwrap();
            assert_eq!(a.mse.to_bits(), b.mse.to_bits(), "{model} MSE must not depend on list order");
            assert_eq!(a.coverage.to_bits(), b.coverage.to_bits());
            assert_eq!(a.avg_std_err.to_bits(), b.avg_std_err.to_bits());
        }
    }

    #[test]
    fn single_rep_single_model_yields_one_row() {
        let mut config = tiny_config();
        config.replications = 1;
        config.models = vec!["config-k2".into()];
        let out = run_benchmark(&config).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.aggregates.len(), 1);
        assert!(out.rows[0].metrics.is_some());
    }

    #[test]
    fn csv_quotes_error_fields() {
        let rows = vec![RepRow {
            model: EmulatorKind::ConfigK1,
            replication: 0,
            metrics: None,
            fit_seconds: 0.5,
            jitter: f64::NAN,
            error: Some("no start converged, tolerance too tight".into()),
        }];
        let mut buf = Vec::new();
        write_rows_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"no start converged, tolerance too tight\""), "{text}");
        assert!(text.starts_with("model,replication,mse,coverage,avg_std_err,fit_seconds,jitter,error\n"));
    }
}
