//! Command-line front end: `fit`, `cv-fit`, `verify`, `check-rates` and
//! `simulate`.
//!
//! Exit codes: 0 success, 1 numerical failure (or a failing `verify`),
//! 2 usage or input error, 66 missing input file.

mod args;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sgl_core::pipeline::{fit_estimator, CvReport, EstimatorKind};
use sgl_core::sim::{
    aggregate_markdown, run_scenario, selection_consistency_curve, write_aggregate_csv, write_curve_csv,
    write_replications_csv,
};
use sgl_core::{
    check_rate_feasibility, kkt_verify, solve, Dataset, Error, FitResult, GroupStructure, LossFamily, PenaltySpec,
};

pub use args::{parse_args, CliError, DataInput, LogLevel, RunConfig, Task, EXIT_NO_INPUT, EXIT_USAGE};

/// Exit status for numerical failures.
pub const EXIT_NUMERICAL: i32 = 1;

/// JSON document written by `fit` and `cv-fit` and read by `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub family: LossFamily,
    pub groups: Vec<usize>,
    pub columns: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<EstimatorKind>,
    pub penalty: PenaltySpec,
    pub fit: FitResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvReport>,
}

#[derive(Debug, Serialize)]
struct VerifyOutput {
    residual: f64,
    stored_residual: f64,
    tol: f64,
    consistent: bool,
    passed: bool,
}

#[derive(Debug)]
enum RunError {
    Core(Error),
    Io(PathBuf, io::Error),
    Input(String),
    NoInput(PathBuf),
    VerifyFailed,
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Core(e)
    }
}

impl RunError {
    fn exit_code(&self) -> i32 {
        match self {
            RunError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            RunError::VerifyFailed => EXIT_NUMERICAL,
            RunError::NoInput(_) => EXIT_NO_INPUT,
            _ => EXIT_USAGE,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        let (kind, message) = match self {
            RunError::Core(e) => (e.kind().to_string(), e.to_string()),
            RunError::Io(p, e) => ("Io".to_string(), format!("{}: {e}", p.display())),
            RunError::Input(m) => ("InvalidInput".to_string(), m.clone()),
            RunError::NoInput(p) => ("FileNotFound".to_string(), p.display().to_string()),
            RunError::VerifyFailed => ("VerifyFailed".to_string(), "KKT certificate rejected".to_string()),
        };
        serde_json::json!({ "error": kind, "message": message })
    }
}

type RunResult<T> = std::result::Result<T, RunError>;

fn load_data(path: &Path, response: &str) -> RunResult<(Dataset, Vec<String>)> {
    let file = File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => RunError::NoInput(path.to_path_buf()),
        _ => RunError::Io(path.to_path_buf(), e),
    })?;
    Ok(Dataset::from_csv_reader(io::BufReader::new(file), response)?)
}

fn check_columns(groups: &GroupStructure, data: &Dataset) -> RunResult<()> {
    if groups.dim() != data.dim() {
        return Err(RunError::Input(format!(
            "group sizes sum to {} but the data has {} predictor columns",
            groups.dim(),
            data.dim()
        )));
    }
    Ok(())
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> RunResult<()> {
    let text = serde_json::to_string_pretty(value).expect("output types serialize");
    match out {
        Some(path) => fs::write(path, text + "\n").map_err(|e| RunError::Io(path.to_path_buf(), e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn create(path: &Path) -> RunResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| RunError::Io(path.to_path_buf(), e))
}

fn run_fit(
    input: &DataInput,
    lambda: f64,
    gamma: f64,
    alpha: &Option<Vec<f64>>,
    xi: &Option<Vec<f64>>,
    solver: &sgl_core::SolverConfig,
    out: Option<&Path>,
) -> RunResult<()> {
    let (data, names) = load_data(&input.path, &input.response)?;
    check_columns(&input.groups, &data)?;
    let mut spec = PenaltySpec::unweighted(lambda, gamma, &input.groups);
    if let Some(a) = alpha {
        spec.alpha_weights = a.clone();
    }
    if let Some(x) = xi {
        spec.xi_weights = x.clone();
    }
    spec.validate(&input.groups)?;
    info!("fitting T = {}, d = {}", data.n_obs(), data.dim());
    let fit = solve(&input.family, &data, &input.groups, &spec, solver, None)?.into_converged()?;
    info!(
        "converged after {} sweeps, KKT residual {:e}",
        fit.iterations, fit.kkt_residual
    );
    emit_json(
        &FitOutput {
            family: input.family,
            groups: input.groups.sizes().to_vec(),
            columns: names,
            kind: None,
            penalty: spec,
            fit,
            cv: None,
        },
        out,
    )
}

fn run_cv_fit(
    input: &DataInput,
    kind: EstimatorKind,
    pipeline: &sgl_core::PipelineConfig,
    out: Option<&Path>,
) -> RunResult<()> {
    let (data, names) = load_data(&input.path, &input.response)?;
    check_columns(&input.groups, &data)?;
    info!("{}-fold cross-validation for {}", pipeline.cv_folds, kind.label());
    let result = fit_estimator(&data, &input.groups, kind, pipeline)?;
    if let Some(cv) = &result.cv {
        if cv.nonconverged_fits > 0 {
            warn!("{} fold fits did not converge", cv.nonconverged_fits);
        }
    }
    emit_json(
        &FitOutput {
            family: input.family,
            groups: input.groups.sizes().to_vec(),
            columns: names,
            kind: Some(kind),
            penalty: result.penalty,
            fit: result.fit,
            cv: result.cv,
        },
        out,
    )
}

/// Recomputed and stored residuals must agree to this absolute tolerance.
const VERIFY_CONSISTENCY: f64 = 1e-12;

fn run_verify(fit_path: &Path, data_path: &Path, response: &str, tol: f64) -> RunResult<()> {
    let text = fs::read_to_string(fit_path).map_err(|e| RunError::Io(fit_path.to_path_buf(), e))?;
    let stored: FitOutput =
        serde_json::from_str(&text).map_err(|e| RunError::Input(format!("{}: {e}", fit_path.display())))?;
    let (data, _) = load_data(data_path, response)?;
    let groups = GroupStructure::new(&stored.groups)?;
    check_columns(&groups, &data)?;
    let report = kkt_verify(&stored.family, &data, &groups, &stored.penalty, &stored.fit.theta_hat)?;
    let consistent = (report.residual - stored.fit.kkt_residual).abs() <= VERIFY_CONSISTENCY;
    let passed = consistent && report.residual <= tol;
    emit_json(
        &VerifyOutput {
            residual: report.residual,
            stored_residual: stored.fit.kkt_residual,
            tol,
            consistent,
            passed,
        },
        None,
    )?;
    if passed {
        Ok(())
    } else {
        Err(RunError::VerifyFailed)
    }
}

fn run_simulate(
    scenario: &sgl_core::sim::ScenarioSpec,
    methods: &[sgl_core::sim::Method],
    pipeline: &sgl_core::PipelineConfig,
    curve: &Option<Vec<usize>>,
    dir: &Path,
) -> RunResult<()> {
    fs::create_dir_all(dir).map_err(|e| RunError::Io(dir.to_path_buf(), e))?;
    info!(
        "scenario T = {}, d = {}, {} replications",
        scenario.n_obs,
        scenario.dim(),
        scenario.replications
    );
    let report = run_scenario(scenario, methods, pipeline)?;
    for f in &report.failures {
        warn!("replication {} {}: {}", f.replication, f.method.name(), f.error);
    }
    write_replications_csv(&report.records, create(&dir.join("replications.csv"))?)?;
    write_aggregate_csv(&report.aggregate, create(&dir.join("aggregate.csv"))?)?;
    let md_path = dir.join("aggregate.md");
    fs::write(&md_path, aggregate_markdown(scenario, &report.aggregate)).map_err(|e| RunError::Io(md_path, e))?;
    let fail_path = dir.join("failures.json");
    let failures = serde_json::to_string_pretty(&report.failures).expect("failures serialize");
    fs::write(&fail_path, failures + "\n").map_err(|e| RunError::Io(fail_path, e))?;
    if let Some(sizes) = curve {
        let path = dir.join("curve.csv");
        let mut writer = create(&path)?;
        let mut first = true;
        for &method in methods {
            let points = selection_consistency_curve(scenario, sizes, method, scenario.replications, pipeline)?;
            let mut buf = Vec::new();
            write_curve_csv(method, &points, &mut buf)?;
            let body = if first {
                &buf[..]
            } else {
                let skip = buf.iter().position(|&b| b == b'\n').map_or(buf.len(), |p| p + 1);
                &buf[skip..]
            };
            first = false;
            writer.write_all(body).map_err(|e| RunError::Io(path.clone(), e))?;
        }
        writer.flush().map_err(|e| RunError::Io(path.clone(), e))?;
    }
    emit_json(&report.aggregate, None)
}

fn dispatch(config: &RunConfig) -> RunResult<()> {
    let out = config.output.as_deref();
    match &config.task {
        Task::Fit {
            input,
            lambda,
            gamma,
            alpha_weights,
            xi_weights,
            solver,
        } => run_fit(input, *lambda, *gamma, alpha_weights, xi_weights, solver, out),
        Task::CvFit { input, kind, pipeline } => run_cv_fit(input, *kind, pipeline, out),
        Task::Verify {
            fit,
            data,
            response,
            tol,
        } => run_verify(fit, data, response, *tol),
        Task::CheckRates { config } => {
            config.validate()?;
            emit_json(&check_rate_feasibility(config), None)
        }
        Task::Simulate {
            scenario,
            methods,
            pipeline,
            curve,
        } => run_simulate(
            scenario,
            methods,
            pipeline,
            curve,
            out.expect("simulate always has an output directory"),
        ),
    }
}

/// Executes a parsed invocation and returns the process exit status.
///
/// A failure is reported as `{"error": kind, "message": …}` in place of the
/// regular output document (the `--out` file, `error.json` in a simulation
/// directory, or stdout) and as one line on stderr.
pub fn run(config: &RunConfig) -> i32 {
    let err = match dispatch(config) {
        Ok(()) => return 0,
        Err(e) => e,
    };
    if !matches!(err, RunError::VerifyFailed) {
        let doc = err.to_json();
        eprintln!("error: {}", doc["message"].as_str().unwrap_or_default());
        let target = match (&config.task, config.output.as_deref()) {
            (Task::Simulate { .. }, Some(dir)) if dir.is_dir() => Some(dir.join("error.json")),
            (Task::Simulate { .. }, _) => None,
            (_, out) => out.map(Path::to_path_buf),
        };
        if emit_json(&doc, target.as_deref()).is_err() {
            println!("{doc}");
        }
    }
    err.exit_code()
}
