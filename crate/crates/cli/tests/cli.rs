use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sgl_cli::FitOutput;
use sgl_core::sim::{generate_data, generate_instance, ScenarioSpec};

fn sgl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgl"))
        .args(args)
        .env("SGL_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn small_scenario(n_obs: usize) -> ScenarioSpec {
    ScenarioSpec {
        n_obs,
        x_scale: 8.0,
        n_groups: 3,
        replications: 4,
        master_seed: 11,
        ..ScenarioSpec::default()
    }
}

/// Writes simulated data as `x0,…,x{d-1},y` and returns the group sizes.
fn write_csv(dir: &Path, n_obs: usize, binary: bool) -> (PathBuf, Vec<usize>) {
    let spec = small_scenario(n_obs);
    let instance = generate_instance(&spec, 3).unwrap();
    let data = generate_data(&instance, n_obs, spec.sigma, 3).unwrap();
    let d = data.dim();
    let mut text = String::new();
    for j in 0..d {
        write!(text, "x{j},").unwrap();
    }
    text.push_str("y\n");
    for i in 0..data.n_obs() {
        for j in 0..d {
            write!(text, "{},", data.design()[(i, j)]).unwrap();
        }
        let y = data.response()[i];
        let y = if binary { f64::from(u8::from(y > 0.0)) } else { y };
        writeln!(text, "{y}").unwrap();
    }
    let path = dir.join(if binary { "binary.csv" } else { "data.csv" });
    std::fs::write(&path, text).unwrap();
    (path, instance.groups.sizes().to_vec())
}

fn groups_arg(sizes: &[usize]) -> String {
    serde_json::to_string(sizes).unwrap()
}

#[test]
fn fit_then_verify_accepts_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let (data, sizes) = write_csv(dir.path(), 120, false);
    let fit = dir.path().join("fit.json");
    let out = sgl(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--response",
        "y",
        "--groups",
        &groups_arg(&sizes),
        "--lambda",
        "2",
        "--gamma",
        "3",
        "--out",
        fit.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stored: FitOutput = serde_json::from_str(&std::fs::read_to_string(&fit).unwrap()).unwrap();
    assert!(stored.fit.converged);
    assert!(stored.fit.kkt_residual <= 1e-6);
    assert_eq!(stored.columns.len(), sizes.iter().sum::<usize>());
    assert_eq!(stored.groups, sizes);

    let out = sgl(&[
        "verify",
        "--fit",
        fit.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--response",
        "y",
    ]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_eq!(v["passed"], true);
    assert!((v["residual"].as_f64().unwrap() - stored.fit.kkt_residual).abs() <= 1e-12);
}

#[test]
fn verify_rejects_perturbed_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let (data, sizes) = write_csv(dir.path(), 120, false);
    let fit = dir.path().join("fit.json");
    let out = sgl(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--response",
        "y",
        "--groups",
        &groups_arg(&sizes),
        "--lambda",
        "1",
        "--gamma",
        "1",
        "--out",
        fit.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let mut stored: FitOutput = serde_json::from_str(&std::fs::read_to_string(&fit).unwrap()).unwrap();
    stored.fit.theta_hat[0] += 0.05;
    std::fs::write(&fit, serde_json::to_string(&stored).unwrap()).unwrap();
    let out = sgl(&[
        "verify",
        "--fit",
        fit.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--response",
        "y",
    ]);
    assert_eq!(code(&out), 1);
    assert_eq!(stdout_json(&out)["passed"], false);
}

#[test]
fn logistic_fit_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let (data, sizes) = write_csv(dir.path(), 150, true);
    let out = sgl(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--response",
        "y",
        "--groups",
        &groups_arg(&sizes),
        "--family",
        "logistic",
        "--lambda",
        "1",
        "--gamma",
        "1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["family"], "logistic");
    assert!(v["fit"]["kkt_residual"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn cv_fit_reports_selection() {
    let dir = tempfile::tempdir().unwrap();
    let (data, sizes) = write_csv(dir.path(), 120, false);
    let out = sgl(&[
        "cv-fit",
        "--data",
        data.to_str().unwrap(),
        "--response",
        "y",
        "--groups",
        &groups_arg(&sizes),
        "--kind",
        "ASGL",
        "--folds",
        "3",
        "--grid",
        "[0.5, 1, 2]",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["kind"], "adaptive_sgl");
    assert_eq!(v["cv"]["folds"], 3);
    assert_eq!(v["cv"]["grid"].as_array().unwrap().len(), 9);
    let selected = &v["cv"]["selected"];
    assert_eq!(selected[0], v["penalty"]["lambda"]);
    assert_eq!(selected[1], v["penalty"]["gamma"]);
}

#[test]
fn adaptive_fit_with_too_few_observations_is_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let (data, sizes) = write_csv(dir.path(), 12, false);
    assert!(sizes.iter().sum::<usize>() >= 12);
    let out = sgl(&[
        "cv-fit",
        "--data",
        data.to_str().unwrap(),
        "--response",
        "y",
        "--groups",
        &groups_arg(&sizes),
        "--kind",
        "adaptive_lasso",
    ]);
    assert_eq!(code(&out), 1);
    assert_eq!(stdout_json(&out)["error"], "IllPosed");
}

#[test]
fn unpenalized_rank_deficient_fit_records_error_in_output() {
    let dir = tempfile::tempdir().unwrap();
    let (data, sizes) = write_csv(dir.path(), 12, false);
    let out_file = dir.path().join("fit.json");
    let out = sgl(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--response",
        "y",
        "--groups",
        &groups_arg(&sizes),
        "--lambda",
        "0",
        "--gamma",
        "0",
        "--out",
        out_file.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&out_file).unwrap()).unwrap();
    assert_eq!(doc["error"], "IllPosed");
    assert!(!out.stderr.is_empty());
}

#[test]
fn exit_codes_for_bad_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let (data, sizes) = write_csv(dir.path(), 40, false);
    let data = data.to_str().unwrap();

    assert_eq!(code(&sgl(&["--help"])), 0);
    assert_eq!(code(&sgl(&[])), 2);
    assert_eq!(code(&sgl(&["bogus"])), 2);
    assert_eq!(
        code(&sgl(&[
            "fit",
            "--data",
            data,
            "--response",
            "y",
            "--groups",
            "[1]",
            "--lambda",
            "x",
            "--gamma",
            "1"
        ])),
        2
    );
    // sizes that do not match the columns
    let out = sgl(&[
        "fit",
        "--data",
        data,
        "--response",
        "y",
        "--groups",
        "[1, 1]",
        "--lambda",
        "1",
        "--gamma",
        "1",
    ]);
    assert_eq!(code(&out), 2);
    // unknown response column
    let out = sgl(&[
        "fit",
        "--data",
        data,
        "--response",
        "nope",
        "--groups",
        &groups_arg(&sizes),
        "--lambda",
        "1",
        "--gamma",
        "1",
    ]);
    assert_eq!(code(&out), 2);
    // negative tuning
    let out = sgl(&[
        "fit",
        "--data",
        data,
        "--response",
        "y",
        "--groups",
        &groups_arg(&sizes),
        "--lambda=-1",
        "--gamma",
        "1",
    ]);
    assert_eq!(code(&out), 2);
    let missing = dir.path().join("absent.csv");
    let out = sgl(&[
        "fit",
        "--data",
        missing.to_str().unwrap(),
        "--response",
        "y",
        "--groups",
        "[1]",
        "--lambda",
        "1",
        "--gamma",
        "1",
    ]);
    assert_eq!(code(&out), 66);
    assert_eq!(code(&sgl(&["check-rates", "--config", missing.to_str().unwrap()])), 66);
    assert_eq!(code(&sgl(&["check-rates", "--config", "{\"eta\": 1}"])), 2);
}

#[test]
fn check_rates_inline_and_file() {
    let out = sgl(&[
        "check-rates",
        "--config",
        r#"{"eta": 3.5, "mu": 2.5, "kappa": 0.05, "beta_rate": 0.1, "alpha_rate": 0.1, "c_growth": 0.16666666666666666}"#,
    ]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_eq!(v["feasible"], true);
    assert_eq!(v["conditions"].as_array().unwrap().len(), 5);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rates.json");
    std::fs::write(
        &path,
        r#"{"eta": 3.5, "mu": 0.4, "kappa": 0.05, "beta_rate": 0.1, "alpha_rate": 0.1, "c_growth": 0.16666666666666666}"#,
    )
    .unwrap();
    let out = sgl(&["check-rates", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_eq!(v["feasible"], false);
    assert_eq!(v["conditions"][1]["holds"], false);
}

#[test]
fn simulate_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = serde_json::to_string(&small_scenario(80)).unwrap();
    let out_dir = dir.path().join("run");
    let out = sgl(&[
        "simulate",
        "--scenario",
        &scenario,
        "--methods",
        "SGL,ASGL,Oracle",
        "--out",
        out_dir.to_str().unwrap(),
        "--curve",
        "60,120",
        "--config",
        r#"{"cv_folds": 3, "grid_factors": [0.5, 1, 2]}"#,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let agg = stdout_json(&out);
    assert_eq!(agg.as_array().unwrap().len(), 3);

    let read = |name: &str| std::fs::read_to_string(out_dir.join(name)).unwrap();
    let reps = read("replications.csv");
    assert!(reps.starts_with("method,rep,mse,C,IC,exact\n"));
    assert_eq!(reps.lines().count(), 1 + 3 * 4);
    assert!(read("aggregate.csv").starts_with("method,mse,C,IC,exact_rate\n"));
    assert!(read("aggregate.md").contains("ASGL"));
    let curve = read("curve.csv");
    assert_eq!(curve.matches("method,T,d").count(), 1);
    assert_eq!(curve.lines().count(), 1 + 3 * 2);
    let failures: Value = serde_json::from_str(&read("failures.json")).unwrap();
    assert!(failures.as_array().unwrap().is_empty());
}

#[test]
fn simulate_rejects_bad_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = sgl(&[
        "simulate",
        "--scenario",
        r#"{"T": 100, "n_groups": 0}"#,
        "--methods",
        "SGL",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    let out = sgl(&["simulate", "--scenario", "{}", "--methods", "nonsense", "--out", "x"]);
    assert_eq!(code(&out), 2);
}
