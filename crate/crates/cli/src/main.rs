//! `mfgp`: multi-fidelity Gaussian process emulation from the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use mfgp::design::{self, AnnealSchedule, ColumnRole, Design};
use mfgp::mle::{fit_mle, MleOptions};
use mfgp::testbed::TestFunction;
use mfgp::{BasisSpec, Dataset, EmulatorKind, UqMode};

use mfgp_cli::benchmark::{run_benchmark, write_rows_csv, AggregateReport};
use mfgp_cli::compare::{run_compare, GR_THRESHOLD};
use mfgp_cli::config::ExperimentConfig;
use mfgp_cli::kernelgrid::{kernel_grid, write_grid_csv, KernelChoice};
use mfgp_cli::modelfile::FittedModel;

#[derive(Parser)]
#[command(
    name = "mfgp",
    version,
    about = "Multi-fidelity Gaussian process emulation: designs, synthetic data, fitting, prediction, MCMC, benchmarks"
)]
struct Cli {
    /// Master seed; overrides the config file's seed when set.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config file (used by benchmark and mcmc-compare).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory result files are written into.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads for replicated runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a space-filling design CSV.
    Design {
        /// Design family: maximin or maxpro.
        #[arg(long, default_value = "maxpro")]
        kind: String,
        /// Number of runs.
        #[arg(short = 'n', long)]
        runs: usize,
        /// Input columns (kept on [0, 1]).
        #[arg(long)]
        inputs: usize,
        /// Fidelity columns.
        #[arg(long, default_value_t = 0)]
        fidelities: usize,
        /// Range the fidelity columns are mapped to.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        fidelity_range: Option<Vec<f64>>,
        /// Optimization effort: swap proposals (maximin) or annealing
        /// proposals (maxpro).
        #[arg(long, default_value_t = 10_000)]
        iterations: usize,
        /// Output CSV path.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Evaluate a synthetic test function over a design CSV.
    Simulate {
        /// Test function: currin or park.
        #[arg(long)]
        function: String,
        /// Design CSV with x and t columns.
        #[arg(long)]
        design: PathBuf,
        /// Output dataset CSV path.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Fit one emulator by maximum likelihood and write a model file.
    Fit {
        /// Training dataset CSV (header x1..xp,t1..tq,y).
        #[arg(long)]
        data: PathBuf,
        /// Emulator kind (standard-gp, high-fidelity-gp, twy-arith,
        /// twy-geom, config-k1, config-k2).
        #[arg(long)]
        model: String,
        /// Mean basis: constant, linear-in-x, or linear-in-xt (default:
        /// per-model).
        #[arg(long)]
        basis: Option<String>,
        /// Optimizer restarts.
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        /// Outer exponent of the Brownian-type kernels.
        #[arg(long, default_value_t = 2.0)]
        l: f64,
        /// Comma-separated per-fidelity exponents for config-k2.
        #[arg(long)]
        l_r: Option<String>,
        /// Output model JSON path.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Predict from a fitted model file at new inputs.
    Predict {
        /// Fitted model JSON from `fit`.
        #[arg(long)]
        model_file: PathBuf,
        /// The exact training dataset CSV the model was fitted on.
        #[arg(long)]
        train: PathBuf,
        /// Test design CSV; without t columns, predictions target the
        /// exact limit t = 0.
        #[arg(long)]
        test: PathBuf,
        /// Output predictions CSV path.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run the replicated synthetic benchmark from a config file.
    Benchmark,
    /// Compare plug-in MLE against the fully Bayesian model on one split.
    McmcCompare,
    /// Evaluate a fidelity kernel over a 2D lattice for plotting.
    Kernelgrid {
        /// kernel1 or kernel2.
        #[arg(long)]
        kernel: String,
        /// Fidelity weight theta.
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        /// Outer exponent (kernel2).
        #[arg(long, default_value_t = 2.0)]
        l: f64,
        /// Per-coordinate exponent (kernel2).
        #[arg(long, default_value_t = 2.0)]
        l_r: f64,
        /// Lattice points per axis.
        #[arg(long, default_value_t = 101)]
        resolution: usize,
        /// Output CSV path.
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

/// Global options that outlive the subcommand dispatch.
struct Ctx {
    seed: Option<u64>,
    config: Option<PathBuf>,
    out_dir: PathBuf,
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let Cli { seed, config, out_dir, threads, command } = cli;
    let ctx = Ctx { seed, config, out_dir };
    if let Some(threads) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("cannot size the worker pool")?;
    }
    fs::create_dir_all(&ctx.out_dir)
        .with_context(|| format!("cannot create output directory {}", ctx.out_dir.display()))?;

    match command {
        Command::Design { kind, runs, inputs, fidelities, fidelity_range, iterations, out } => {
            cmd_design(&ctx, &kind, runs, inputs, fidelities, fidelity_range, iterations, &out)?;
        }
        Command::Simulate { function, design, out } => {
            let function: TestFunction = function.parse()?;
            let design = Design::from_csv_path(&design)?;
            let data = mfgp_cli::benchmark::simulate_design(function, &design)?;
            data.to_csv_path(out_path(&ctx, &out))?;
        }
        Command::Fit { data, model, basis, restarts, l, l_r, out } => {
            cmd_fit(&ctx, &data, &model, basis.as_deref(), restarts, l, l_r.as_deref(), &out)?;
        }
        Command::Predict { model_file, train, test, out } => {
            cmd_predict(&ctx, &model_file, &train, &test, &out)?;
        }
        Command::Benchmark => {
            let config = load_config(&ctx)?;
            let output = run_benchmark(&config)?;
            let csv_path = ctx.out_dir.join(format!("benchmark-{}-replications.csv", output.function));
            let json_path = ctx.out_dir.join(format!("benchmark-{}-aggregate.json", output.function));
            let file = fs::File::create(&csv_path)
                .with_context(|| format!("cannot write {}", csv_path.display()))?;
            write_rows_csv(&output.rows, file)?;
            let report = AggregateReport::new(&config, &output);
            fs::write(&json_path, serde_json::to_string_pretty(&report)? + "\n")?;
            println!("benchmark: {} ({} replications)", output.function, config.replications);
            println!("{:<18} {:>10} {:>10} {:>12} {:>6}", "model", "avg MSE", "coverage", "avg std err", "fails");
            for agg in &output.aggregates {
                match agg.metrics {
                    Some(m) => println!(
                        "{:<18} {:>10.4} {:>10.4} {:>12.4} {:>6}",
                        agg.model.as_str(),
                        m.mse,
                        m.coverage,
                        m.avg_std_err,
                        agg.failures
                    ),
                    None => println!(
                        "{:<18} {:>10} {:>10} {:>12} {:>6}",
                        agg.model.as_str(),
                        "-",
                        "-",
                        "-",
                        agg.failures
                    ),
                }
            }
            println!("wrote {}", csv_path.display());
            println!("wrote {}", json_path.display());
        }
        Command::McmcCompare => {
            let config = load_config(&ctx)?;
            let report = run_compare(&config)?;
            let json_path = ctx.out_dir.join(format!("mcmc-compare-{}.json", report.function));
            fs::write(&json_path, serde_json::to_string_pretty(&report)? + "\n")?;
            println!("mcmc-compare: {} (config-k2)", report.function);
            println!(
                "mle:   mse {:.4}  coverage {:.4}  avg std err {:.4}",
                report.mle.mse, report.mle.coverage, report.mle.avg_std_err
            );
            println!(
                "bayes: mse {:.4}  coverage {:.4}  avg std err {:.4}",
                report.bayes.mse, report.bayes.coverage, report.bayes.avg_std_err
            );
            let worst = report
                .gelman_rubin
                .iter()
                .max_by(|a, b| a.value.total_cmp(&b.value))
                .expect("at least one parameter");
            println!("gelman-rubin: worst {} = {:.4}", worst.parameter, worst.value);
            println!("wrote {}", json_path.display());
            if !report.converged {
                for entry in report.flagged() {
                    eprintln!(
                        "warning: {} has scale reduction {:.4} (threshold {GR_THRESHOLD})",
                        entry.parameter, entry.value
                    );
                }
                eprintln!("warning: chains have not converged; treat the report with suspicion");
                return Ok(ExitCode::from(2));
            }
        }
        Command::Kernelgrid { kernel, theta, l, l_r, resolution, out } => {
            let kernel: KernelChoice = kernel.parse()?;
            let grid = kernel_grid(kernel, theta, l, l_r, resolution)?;
            let path = out_path(&ctx, &out);
            let file =
                fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
            write_grid_csv(&grid, file)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Joins relative output paths onto --out-dir; absolute paths win.
fn out_path(ctx: &Ctx, out: &Path) -> PathBuf {
    if out.is_absolute() {
        out.to_path_buf()
    } else {
        ctx.out_dir.join(out)
    }
}

fn load_config(ctx: &Ctx) -> anyhow::Result<ExperimentConfig> {
    let path = ctx
        .config
        .as_ref()
        .context("this command needs --config pointing at an experiment JSON file")?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = ctx.seed {
        config.seed = seed;
    }
    Ok(config)
}

#[allow(clippy::too_many_arguments)]
fn cmd_design(
    ctx: &Ctx,
    kind: &str,
    runs: usize,
    inputs: usize,
    fidelities: usize,
    fidelity_range: Option<Vec<f64>>,
    iterations: usize,
    out: &Path,
) -> anyhow::Result<()> {
    let d = inputs + fidelities;
    if d == 0 {
        bail!("the design needs at least one column");
    }
    let seed = ctx.seed.unwrap_or(0);
    let design = match kind {
        "maximin" => design::maximin_lhd(runs, d, seed, iterations),
        "maxpro" => design::maxpro(
            runs,
            d,
            seed,
            &AnnealSchedule { proposals: iterations, ..AnnealSchedule::default() },
        ),
        other => bail!("unknown design kind {other:?}; expected maximin or maxpro"),
    };
    let mut roles = vec![ColumnRole::Input; inputs];
    roles.extend(std::iter::repeat(ColumnRole::Fidelity).take(fidelities));
    let mut design = design.with_roles(roles)?;
    if let Some(range) = fidelity_range {
        let (lo, hi) = (range[0], range[1]);
        let mut ranges = vec![(0.0, 1.0); inputs];
        ranges.extend(std::iter::repeat((lo, hi)).take(fidelities));
        design = design::map_ranges(&design, &ranges)?;
    }
    design.to_csv_path(out_path(ctx, out))?;
    Ok(())
}

fn parse_basis(name: &str) -> anyhow::Result<BasisSpec> {
    match name {
        "constant" => Ok(BasisSpec::Constant),
        "linear-in-x" => Ok(BasisSpec::LinearInX),
        "linear-in-xt" => Ok(BasisSpec::LinearInXT),
        other => bail!("unknown basis {other:?}; expected constant, linear-in-x, or linear-in-xt"),
    }
}

fn parse_l_r(text: &str) -> anyhow::Result<Vec<f64>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .with_context(|| format!("bad exponent {part:?} in --l-r"))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    ctx: &Ctx,
    data: &Path,
    model: &str,
    basis: Option<&str>,
    restarts: usize,
    l: f64,
    l_r: Option<&str>,
    out: &Path,
) -> anyhow::Result<()> {
    let model: EmulatorKind = model.parse()?;
    let data = Dataset::from_csv_path(data)?;
    let options = MleOptions {
        restarts,
        seed: ctx.seed.unwrap_or(0),
        basis: basis.map(parse_basis).transpose()?,
        l,
        l_r: l_r.map(parse_l_r).transpose()?,
        ..MleOptions::default()
    };
    let fit = fit_mle(&data, model, &options)?;
    let file = FittedModel::from_fit(&data, model, &fit)?;
    file.save(&out_path(ctx, out))?;
    println!(
        "fitted {model}: log-likelihood {:.4}, {} of {} starts converged",
        fit.log_likelihood,
        fit.converged.iter().filter(|c| **c).count(),
        fit.converged.len()
    );
    Ok(())
}

fn cmd_predict(
    ctx: &Ctx,
    model_file: &Path,
    train: &Path,
    test: &Path,
    out: &Path,
) -> anyhow::Result<()> {
    let model = FittedModel::load(model_file)?;
    let train = Dataset::from_csv_path(train)?;
    let predictor = model.predictor_for(&train)?;
    let test = Design::from_csv_path(test)?;

    let path = out_path(ctx, out);
    let mut w = std::io::BufWriter::new(
        fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?,
    );
    use std::io::Write;
    let mut header = Vec::new();
    let (mut xi, mut ti) = (0, 0);
    for role in test.roles() {
        match role {
            ColumnRole::Input => {
                xi += 1;
                header.push(format!("x{xi}"));
            }
            ColumnRole::Fidelity => {
                ti += 1;
                header.push(format!("t{ti}"));
            }
        }
    }
    header.extend(["mean", "variance", "lo95", "hi95"].map(str::to_owned));
    writeln!(w, "{}", header.join(","))?;
    for i in 0..test.n() {
        let (x, t) = test.split_row(i);
        let dist = if t.is_empty() {
            predictor.predict(&x, UqMode::BasisAdjusted)?
        } else {
            predictor.predict_at(&x, &t, UqMode::BasisAdjusted)?
        };
        let mut fields: Vec<String> = test.row(i).iter().map(f64::to_string).collect();
        fields.push(dist.mean.to_string());
        fields.push(dist.variance.to_string());
        fields.push(dist.interval95.0.to_string());
        fields.push(dist.interval95.1.to_string());
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}
