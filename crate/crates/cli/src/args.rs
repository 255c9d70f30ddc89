//! Argument parsing into a validated [`RunConfig`].

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sgl_core::penalty::AdaptiveConfig;
use sgl_core::pipeline::{EstimatorKind, PipelineConfig};
use sgl_core::sim::{Method, ScenarioSpec};
use sgl_core::{GroupStructure, LossFamily, SolverConfig};

/// Exit status for usage errors.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for missing input files.
pub const EXIT_NO_INPUT: i32 = 66;

#[derive(Debug, Parser)]
#[command(
    name = "sgl",
    version,
    about = "Sparse-group LASSO estimation, verification and simulation"
)]
struct Cli {
    /// Logging verbosity on stderr.
    #[arg(long, value_enum, default_value_t = LogLevel::Warn, global = true)]
    log_level: LogLevel,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

impl LogLevel {
    pub fn filter(self) -> log::LevelFilter {
        match self {
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit at a fixed (λ, γ).
    Fit(FitArgs),
    /// Cross-validate the tuning pair of an estimator and refit.
    CvFit(CvFitArgs),
    /// Recompute the KKT residual of a fit file.
    Verify(VerifyArgs),
    /// Evaluate the rate conditions of an exponent configuration.
    CheckRates(CheckRatesArgs),
    /// Run a Monte Carlo scenario.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Name of the response column.
    #[arg(long)]
    response: String,
    /// Group sizes as a JSON array, inline or in a file.
    #[arg(long)]
    groups: String,
    #[arg(long, value_enum, default_value_t = FamilyArg::Squared)]
    family: FamilyArg,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Squared,
    Logistic,
}

impl From<FamilyArg> for LossFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Squared => LossFamily::Squared,
            FamilyArg::Logistic => LossFamily::Logistic,
        }
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    gamma: f64,
    /// Per-coefficient ℓ¹ weights as a JSON array (default all 1).
    #[arg(long)]
    alpha_weights: Option<String>,
    /// Per-group weights as a JSON array (default all 1).
    #[arg(long)]
    xi_weights: Option<String>,
    /// Solver settings as JSON, inline or in a file.
    #[arg(long)]
    solver: Option<String>,
}

#[derive(Debug, Args)]
struct CvFitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_parser = parse_kind)]
    kind: EstimatorKind,
    #[arg(long)]
    folds: Option<usize>,
    /// Grid factors as a JSON array.
    #[arg(long)]
    grid: Option<String>,
    /// Pipeline settings as JSON, inline or in a file.
    #[arg(long)]
    config: Option<String>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// JSON written by `fit` or `cv-fit`.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    response: String,
    /// Residual bound for a passing certificate.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Debug, Args)]
struct CheckRatesArgs {
    /// JSON with keys eta, mu, kappa, beta_rate, alpha_rate, c_growth.
    #[arg(long)]
    config: String,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario as JSON, inline or in a file.
    #[arg(long)]
    scenario: String,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', value_parser = parse_method, required = true)]
    methods: Vec<Method>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated sample sizes for the exact-recovery curve.
    #[arg(long, value_delimiter = ',')]
    curve: Option<Vec<usize>>,
    /// Pipeline settings as JSON, inline or in a file.
    #[arg(long)]
    config: Option<String>,
}

fn parse_kind(s: &str) -> Result<EstimatorKind, String> {
    s.parse().map_err(|e: sgl_core::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: sgl_core::Error| e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataInput {
    pub path: PathBuf,
    pub response: String,
    pub groups: GroupStructure,
    pub family: LossFamily,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Fit {
        input: DataInput,
        lambda: f64,
        gamma: f64,
        alpha_weights: Option<Vec<f64>>,
        xi_weights: Option<Vec<f64>>,
        solver: SolverConfig,
    },
    CvFit {
        input: DataInput,
        kind: EstimatorKind,
        pipeline: PipelineConfig,
    },
    Verify {
        fit: PathBuf,
        data: PathBuf,
        response: String,
        tol: f64,
    },
    CheckRates {
        config: AdaptiveConfig,
    },
    Simulate {
        scenario: ScenarioSpec,
        methods: Vec<Method>,
        pipeline: PipelineConfig,
        curve: Option<Vec<usize>>,
    },
}

/// A validated invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    /// File or directory receiving the output; stdout when absent.
    pub output: Option<PathBuf>,
    pub log_level: LogLevel,
}

#[derive(Debug)]
pub enum CliError {
    /// Malformed arguments or option values; also carries `--help`.
    Usage(String, i32),
    FileNotFound(PathBuf),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_, code) => *code,
            CliError::FileNotFound(_) => EXIT_NO_INPUT,
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Usage(m, _) => m.clone(),
            CliError::FileNotFound(p) => format!("error: input file not found: {}", p.display()),
        }
    }
}

fn usage(msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("error: {msg}"), EXIT_USAGE)
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::FileNotFound(path.to_path_buf()))
    }
}

/// Reads a JSON value given inline or as a path. Text that parses as JSON
/// is taken inline; otherwise it must name an existing file.
fn json_arg<T: serde::de::DeserializeOwned>(name: &str, raw: &str) -> Result<T, CliError> {
    let inline: Result<T, _> = serde_json::from_str(raw);
    if let Ok(v) = inline {
        return Ok(v);
    }
    let trimmed = raw.trim_start();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        return Err(usage(format!("--{name}: {}", inline.err().unwrap())));
    }
    let path = Path::new(raw);
    require_file(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("--{name}: {e}")))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("--{name} ({}): {e}", path.display())))
}

fn data_input(args: DataArgs) -> Result<(DataInput, Option<PathBuf>), CliError> {
    require_file(&args.data)?;
    let sizes: Vec<usize> = json_arg("groups", &args.groups)?;
    let groups = GroupStructure::new(&sizes).map_err(|e| usage(format!("--groups: {e}")))?;
    Ok((
        DataInput {
            path: args.data,
            response: args.response,
            groups,
            family: args.family.into(),
        },
        args.out,
    ))
}

pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.render().to_string(), e.exit_code()))?;
    let (task, output) = match cli.command {
        Command::Fit(a) => {
            let solver = match &a.solver {
                Some(raw) => json_arg("solver", raw)?,
                None => SolverConfig::default(),
            };
            solver.validate().map_err(|e| usage(format!("--solver: {e}")))?;
            let alpha_weights = a
                .alpha_weights
                .as_deref()
                .map(|r| json_arg("alpha-weights", r))
                .transpose()?;
            let xi_weights = a.xi_weights.as_deref().map(|r| json_arg("xi-weights", r)).transpose()?;
            let (input, out) = data_input(a.data)?;
            (
                Task::Fit {
                    input,
                    lambda: a.lambda,
                    gamma: a.gamma,
                    alpha_weights,
                    xi_weights,
                    solver,
                },
                out,
            )
        }
        Command::CvFit(a) => {
            let mut pipeline: PipelineConfig = match &a.config {
                Some(raw) => json_arg("config", raw)?,
                None => PipelineConfig::default(),
            };
            if let Some(k) = a.folds {
                pipeline.cv_folds = k;
            }
            if let Some(raw) = &a.grid {
                pipeline.grid_factors = json_arg("grid", raw)?;
            }
            let (input, out) = data_input(a.data)?;
            pipeline.family = input.family;
            pipeline.validate().map_err(usage)?;
            (
                Task::CvFit {
                    input,
                    kind: a.kind,
                    pipeline,
                },
                out,
            )
        }
        Command::Verify(a) => {
            require_file(&a.fit)?;
            require_file(&a.data)?;
            if !(a.tol >= 0.0) {
                return Err(usage("--tol must be non-negative"));
            }
            (
                Task::Verify {
                    fit: a.fit,
                    data: a.data,
                    response: a.response,
                    tol: a.tol,
                },
                None,
            )
        }
        Command::CheckRates(a) => {
            let config: AdaptiveConfig = json_arg("config", &a.config)?;
            (Task::CheckRates { config }, None)
        }
        Command::Simulate(a) => {
            let scenario: ScenarioSpec = json_arg("scenario", &a.scenario)?;
            scenario.validate().map_err(|e| usage(format!("--scenario: {e}")))?;
            let pipeline: PipelineConfig = match &a.config {
                Some(raw) => json_arg("config", raw)?,
                None => PipelineConfig::default(),
            };
            pipeline.validate().map_err(usage)?;
            if let Some(c) = &a.curve {
                if c.is_empty() || c.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(usage("--curve sample sizes must be increasing"));
                }
            }
            (
                Task::Simulate {
                    scenario,
                    methods: a.methods,
                    pipeline,
                    curve: a.curve,
                },
                Some(a.out),
            )
        }
    };
    Ok(RunConfig {
        task,
        output,
        log_level: cli.log_level,
    })
}
