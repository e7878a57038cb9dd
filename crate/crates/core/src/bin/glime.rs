use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use glime::harness::{self, emit, Cell, Experiment, ExperimentConfig, OutputFormat, RunOptions, Table};
use glime::{Error, Result};

#[derive(Parser)]
#[command(name = "glime", version, about = "Local surrogate explanations and their sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One explanation: first method, sigma, sample size, lambda and seed of the config.
    Explain(Common),
    /// Top-K Jaccard stability across seeds.
    Stability(Common),
    /// LIME vs GLIME-Binomial distance as the sample size grows.
    Converge(Common),
    /// Local fidelity of each method on epsilon-balls.
    Fidelity(Common),
    /// Binary-law pmf and kernel weight tables.
    Distributions {
        #[command(flatten)]
        common: Common,
        /// Number of features; defaults to the first config input.
        #[arg(long)]
        dim: Option<usize>,
        /// Comma-separated kernel widths; defaults to the config's sigmas.
        #[arg(long, value_delimiter = ',')]
        sigmas: Vec<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json; defaults to the config's output format.
    #[arg(long)]
    format: Option<OutputFormat>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) => Failure::Config(e),
            other => Failure::Runtime(other),
        }
    }
}

struct Session {
    experiment: Option<Experiment>,
    options: RunOptions,
    format: OutputFormat,
    out: Option<PathBuf>,
}

impl Session {
    fn open(common: &Common, config_required: bool) -> Result<Session, Failure> {
        if common.jobs == Some(0) {
            return Err(Failure::Config(Error::InvalidConfig("--jobs must be at least 1".into())));
        }
        let experiment = match &common.config {
            Some(path) => Some(ExperimentConfig::load(path).map_err(config_error)?),
            None if config_required => {
                return Err(Failure::Config(Error::InvalidConfig("--config is required".into())))
            }
            None => None,
        };
        let output = experiment.as_ref().map(|e| e.config.output.clone()).unwrap_or_default();
        let base = common.config.as_deref().and_then(Path::parent);
        Ok(Session {
            options: RunOptions {
                jobs: common.jobs,
                master_seed: common.seed,
            },
            format: common.format.unwrap_or(output.format),
            out: common.out.clone().or_else(|| {
                output.path.map(|p| match base {
                    Some(dir) if p.is_relative() => dir.join(p),
                    _ => p,
                })
            }),
            experiment,
        })
    }

    fn experiment(&self) -> &Experiment {
        self.experiment.as_ref().expect("config checked at open")
    }

    fn emit(&self, table: &Table) -> Result<(), Failure> {
        Ok(emit(table, self.format, self.out.as_deref())?)
    }
}

/// Anything that goes wrong while loading the config is a config error.
fn config_error(e: Error) -> Failure {
    match e {
        Error::InvalidConfig(_) => Failure::Config(e),
        other => Failure::Config(Error::InvalidConfig(other.to_string())),
    }
}

fn explanation_table(e: &glime::explain::Explanation) -> Table {
    let mut table = Table::new(&["method", "sigma", "lambda", "n", "seed", "feature", "w", "intercept", "r2"]);
    for (j, &w) in e.w.iter().enumerate() {
        table.push(vec![
            e.method.name().into(),
            e.method.sigma().into(),
            e.lambda.into(),
            e.n.into(),
            Cell::Int(e.seed),
            j.into(),
            w.into(),
            e.intercept.into(),
            e.r2.into(),
        ]);
    }
    table
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Explain(common) => {
            let s = Session::open(&common, true)?;
            let e = harness::run_explain(s.experiment(), &s.options)?;
            match s.format {
                OutputFormat::Json => {
                    let text = e.to_json() + "\n";
                    match &s.out {
                        Some(p) => std::fs::write(p, text).map_err(Error::from)?,
                        None => print!("{text}"),
                    }
                    Ok(())
                }
                OutputFormat::Csv => s.emit(&explanation_table(&e)),
            }
        }
        Command::Stability(common) => {
            let s = Session::open(&common, true)?;
            s.emit(&harness::run_stability(s.experiment(), &s.options)?)
        }
        Command::Converge(common) => {
            let s = Session::open(&common, true)?;
            s.emit(&harness::run_convergence(s.experiment(), &s.options)?)
        }
        Command::Fidelity(common) => {
            let s = Session::open(&common, true)?;
            s.emit(&harness::run_fidelity(s.experiment(), &s.options)?)
        }
        Command::Distributions { common, dim, sigmas } => {
            let s = Session::open(&common, false)?;
            let dim = dim
                .or_else(|| s.experiment.as_ref().map(|e| e.inputs[0].segmentation.num_features()))
                .ok_or_else(|| Failure::Config(Error::InvalidConfig("--dim or --config is required".into())))?;
            let sigmas = match (sigmas.is_empty(), &s.experiment) {
                (false, _) => sigmas,
                (true, Some(e)) => e.config.sigmas.clone(),
                (true, None) => {
                    return Err(Failure::Config(Error::InvalidConfig("--sigmas or --config is required".into())))
                }
            };
            if let Some(bad) = sigmas.iter().find(|s| s.is_nan() || **s <= 0.0) {
                return Err(Failure::Config(Error::InvalidConfig(format!("sigma must be positive, got {bad}"))));
            }
            s.emit(&harness::distribution_table(dim, &sigmas).map_err(config_error)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("glime: config error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("glime: {e}");
            ExitCode::from(2)
        }
    }
}
