//! Simulation design with grouped Toeplitz covariates and a Monte Carlo
//! harness comparing the estimators on support recovery and accuracy.
//!
//! Replication `r` draws its instance and data from ChaCha8 generators seeded
//! with `master_seed ^ r` (stream 0 for the instance, stream 1 for the data),
//! so replications are independent of scheduling. Results are reduced in
//! replication order.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::{compare_supports, ActiveSets, GroupStructure};
use crate::loss::{sandwich_covariance, Dataset};
use crate::pipeline::{first_step_estimator, fit_estimator_with_first_step, EstimatorKind, PipelineConfig};

const MAX_INSTANCE_ATTEMPTS: usize = 100;
/// Minimum number of exact recoveries for the moment report.
pub const MIN_RECOVERIES: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    /// Sample size `T`.
    #[serde(rename = "T", alias = "n_obs")]
    pub n_obs: usize,
    /// `x` in `d_T = ⌊x · T^{1/6}⌋`.
    pub x_scale: f64,
    pub n_groups: usize,
    pub sigma: f64,
    pub rho_choices: Vec<f64>,
    pub group_size_range: [usize; 2],
    pub signal_range: [f64; 2],
    pub replications: usize,
    pub master_seed: u64,
    /// Keep one instance (drawn from `master_seed`) and redraw only the data.
    pub fixed_instance: bool,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n_obs: 500,
            x_scale: 10.0,
            n_groups: 4,
            sigma: 0.3,
            rho_choices: vec![0.5, 0.8, 0.9],
            group_size_range: [5, 30],
            signal_range: [0.1, 0.99],
            replications: 100,
            master_seed: 0,
            fixed_instance: false,
        }
    }
}

impl ScenarioSpec {
    /// The three designs of the reference table: `T = 500, 2000, 4000` with
    /// `(x, N_g) = (10, 4), (30, 8), (50, 18)`.
    pub fn table_row(n_obs: usize) -> Option<Self> {
        let (x_scale, n_groups) = match n_obs {
            500 => (10.0, 4),
            2000 => (30.0, 8),
            4000 => (50.0, 18),
            _ => return None,
        };
        Some(Self {
            n_obs,
            x_scale,
            n_groups,
            ..Self::default()
        })
    }

    /// `d_T = ⌊x · T^{1/6}⌋`.
    pub fn dim(&self) -> usize {
        (self.x_scale * (self.n_obs as f64).powf(1.0 / 6.0) + 1e-9).floor() as usize
    }

    /// `|𝒮| = 2⌊N_g/3⌋`.
    pub fn n_active_groups(&self) -> usize {
        2 * (self.n_groups / 3)
    }

    /// `|𝒜| = 3⌊d_T/9⌋`.
    pub fn n_active(&self) -> usize {
        3 * (self.dim() / 9)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_obs < 1 {
            return bad("T must be positive".into());
        }
        if !(self.x_scale > 0.0 && self.x_scale.is_finite()) {
            return bad(format!("x_scale must be positive, got {}", self.x_scale));
        }
        if self.dim() < 1 {
            return bad("d_T = ⌊x·T^(1/6)⌋ must be at least 1".into());
        }
        if self.n_groups < 1 {
            return bad("n_groups must be at least 1".into());
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be non-negative, got {}", self.sigma));
        }
        if self.rho_choices.is_empty() || self.rho_choices.iter().any(|r| !(r.abs() < 1.0)) {
            return bad("rho_choices must be non-empty with entries in (-1, 1)".into());
        }
        let [lo, hi] = self.group_size_range;
        if lo < 1 || lo > hi {
            return bad(format!("invalid group_size_range [{lo}, {hi}]"));
        }
        let [a, b] = self.signal_range;
        if !(a.is_finite() && b.is_finite() && a <= b) || (a <= 0.0 && b >= 0.0) {
            return bad(format!("signal_range [{a}, {b}] must not contain zero"));
        }
        if self.replications < 1 {
            return bad("replications must be at least 1".into());
        }
        Ok(())
    }

    fn instance_seed(&self, replication: usize) -> u64 {
        if self.fixed_instance {
            self.master_seed
        } else {
            self.master_seed ^ replication as u64
        }
    }
}

/// True model of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthInstance {
    pub groups: GroupStructure,
    #[serde(with = "crate::dvec_serde")]
    pub beta0: DVector<f64>,
    pub truth_sets: ActiveSets,
    pub rho_per_group: Vec<f64>,
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Rescales positive integer weights to sum to `total`, each at least 1,
/// by largest-remainder apportionment.
fn apportion(raw: &[usize], total: usize) -> Vec<usize> {
    let sum: usize = raw.iter().sum();
    let shares: Vec<f64> = raw.iter().map(|&u| u as f64 * total as f64 / sum as f64).collect();
    let mut sizes: Vec<usize> = shares.iter().map(|s| (s.floor() as usize).max(1)).collect();
    let mut by_remainder: Vec<usize> = (0..raw.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut assigned: usize = sizes.iter().sum();
    let mut cursor = 0;
    while assigned < total {
        sizes[by_remainder[cursor % raw.len()]] += 1;
        assigned += 1;
        cursor += 1;
    }
    while assigned > total {
        // only reachable when the floor of 1 pushed the sum over
        let k = (0..sizes.len()).rev().max_by_key(|&k| sizes[k]).unwrap();
        sizes[k] -= 1;
        assigned -= 1;
    }
    sizes
}

/// Draws group sizes, active groups, active coordinates and signal values.
pub fn generate_instance(spec: &ScenarioSpec, seed: u64) -> Result<TruthInstance> {
    spec.validate()?;
    let d = spec.dim();
    let n_groups = spec.n_groups;
    let n_sg = spec.n_active_groups();
    let n_active = spec.n_active();
    if n_groups > d {
        return Err(Error::InfeasibleScenario(format!(
            "{n_groups} groups cannot partition d_T = {d}"
        )));
    }
    if n_active < n_sg || (n_sg == 0 && n_active > 0) {
        return Err(Error::InfeasibleScenario(format!(
            "{n_active} non-zeros cannot fill {n_sg} active groups"
        )));
    }
    let mut rng = stream(seed, 0);
    let [lo, hi] = spec.group_size_range;
    for _ in 0..MAX_INSTANCE_ATTEMPTS {
        let raw: Vec<usize> = (0..n_groups).map(|_| rng.random_range(lo..=hi)).collect();
        let sizes = apportion(&raw, d);
        let mut active_groups = sample(&mut rng, n_groups, n_sg).into_vec();
        active_groups.sort_unstable();
        let capacity: usize = active_groups.iter().map(|&k| sizes[k]).sum();
        if capacity < n_active {
            continue;
        }
        let groups = GroupStructure::new(&sizes)?;

        let mut chosen = Vec::with_capacity(n_active);
        let mut rest = Vec::new();
        for &k in &active_groups {
            let range = groups.range(k);
            let pick = range.start + rng.random_range(0..range.len());
            chosen.push(pick);
            rest.extend(range.filter(|&j| j != pick));
        }
        chosen.extend(
            sample(&mut rng, rest.len(), n_active - n_sg)
                .into_iter()
                .map(|i| rest[i]),
        );

        let [a, b] = spec.signal_range;
        let mut beta0 = DVector::zeros(d);
        chosen.sort_unstable();
        for &j in &chosen {
            beta0[j] = if a == b { a } else { rng.random_range(a..b) };
        }
        let rho_per_group = (0..n_groups)
            .map(|_| spec.rho_choices[rng.random_range(0..spec.rho_choices.len())])
            .collect();
        let truth_sets = ActiveSets::from_theta(&beta0, &groups, 0.0)?;
        assert_eq!(truth_sets.active_groups.len(), n_sg);
        assert_eq!(truth_sets.n_active(), n_active);
        assert_eq!(truth_sets.n_zero(), d - n_active);
        return Ok(TruthInstance {
            groups,
            beta0,
            truth_sets,
            rho_per_group,
        });
    }
    Err(Error::InfeasibleScenario(format!(
        "no draw of group sizes in {MAX_INSTANCE_ATTEMPTS} attempts lets {n_sg} active groups host {n_active} non-zeros"
    )))
}

/// Toeplitz correlation matrix with entries `rho^{|i-j|}`.
pub fn toeplitz_covariance(size: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(size, size, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// `n` draws from `N(0, Σ)` with `Σ` the Toeplitz correlation, one per row.
pub fn sample_toeplitz_block<R: Rng>(rng: &mut R, n: usize, size: usize, rho: f64) -> DMatrix<f64> {
    let chol = toeplitz_covariance(size, rho)
        .cholesky()
        .expect("Toeplitz correlation with |rho| < 1 is positive definite");
    let z = DMatrix::from_fn(n, size, |_, _| rng.sample::<f64, _>(StandardNormal));
    z * chol.l().transpose()
}

/// Covariates with independent Toeplitz blocks and `y = Xβ0 + σ η`.
pub fn generate_data(instance: &TruthInstance, n_obs: usize, sigma: f64, seed: u64) -> Result<Dataset> {
    let mut rng = stream(seed, 1);
    let groups = &instance.groups;
    let mut x = DMatrix::zeros(n_obs, groups.dim());
    for (k, range) in groups.ranges().enumerate() {
        let block = sample_toeplitz_block(&mut rng, n_obs, range.len(), instance.rho_per_group[k]);
        x.columns_mut(range.start, range.len()).copy_from(&block);
    }
    let noise = DVector::from_fn(n_obs, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = &x * &instance.beta0 + noise * sigma;
    Dataset::new(x, y)
}

/// A fitted method in the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Method {
    Estimator(EstimatorKind),
    /// Least squares restricted to the true support.
    TruthOracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Estimator(k) => k.name(),
            Method::TruthOracle => "truth_oracle",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Estimator(k) => k.label(),
            Method::TruthOracle => "Oracle",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "truth_oracle" | "truth" | "oracle" | "Oracle" => Ok(Method::TruthOracle),
            other => other.parse().map(Method::Estimator),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.name().to_string()
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub method: Method,
    pub replication: usize,
    pub mse: f64,
    /// True zeros estimated as zero.
    pub correct_zeros: usize,
    /// True non-zeros estimated as zero.
    pub incorrect_zeros: usize,
    pub exact_recovery: bool,
    /// `√T · V̂^{-1/2} (θ̂_𝒜 − β0_𝒜)` when the support is recovered exactly.
    pub standardized_active_errors: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub method: Method,
    pub replication: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: Method,
    pub mse: f64,
    pub correct_zeros: f64,
    pub incorrect_zeros: f64,
    pub exact_rate: f64,
    pub completed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub spec: ScenarioSpec,
    pub records: Vec<ReplicationRecord>,
    pub failures: Vec<ReplicationFailure>,
    pub aggregate: Vec<AggregateRow>,
}

fn oracle_fit(data: &Dataset, instance: &TruthInstance, config: &PipelineConfig) -> Result<DVector<f64>> {
    let support = instance.truth_sets.indices();
    let mut theta = DVector::zeros(data.dim());
    if !support.is_empty() {
        let restricted = first_step_estimator(&data.select_columns(&support), config.family, &config.solver)?;
        for (p, &j) in support.iter().enumerate() {
            theta[j] = restricted[p];
        }
    }
    Ok(theta)
}

/// `√T · V̂^{-1/2} (θ̂_𝒜 − β0_𝒜)` with `V̂` the sandwich covariance at `θ̂`.
pub fn standardized_errors(
    data: &Dataset,
    instance: &TruthInstance,
    theta: &DVector<f64>,
    config: &PipelineConfig,
) -> Result<Vec<f64>> {
    let truth = &instance.truth_sets;
    let v = sandwich_covariance(&config.family, data, theta, truth)?;
    let eig = v.symmetric_eigen();
    let max = eig.eigenvalues.max();
    if !(eig.eigenvalues.min() > crate::loss::SINGULAR_RCOND * max) {
        return Err(Error::SingularHessian {
            rcond: eig.eigenvalues.min() / max,
        });
    }
    let inv_sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * eig.eigenvectors.transpose();
    let idx = truth.indices();
    let err = DVector::from_iterator(idx.len(), idx.iter().map(|&j| theta[j] - instance.beta0[j]));
    let z = inv_sqrt * err * (data.n_obs() as f64).sqrt();
    Ok(z.iter().copied().collect())
}

fn score_fit(
    method: Method,
    replication: usize,
    theta: &DVector<f64>,
    data: &Dataset,
    instance: &TruthInstance,
    config: &PipelineConfig,
) -> Result<ReplicationRecord> {
    let estimated = ActiveSets::from_theta(theta, &instance.groups, 0.0)?;
    let cmp = compare_supports(&estimated, &instance.truth_sets)?;
    let d = theta.len() as f64;
    let mse = (theta - &instance.beta0).norm_squared() / d;
    let standardized_active_errors = if cmp.exact_recovery && instance.truth_sets.n_active() > 0 {
        standardized_errors(data, instance, theta, config).ok()
    } else {
        None
    };
    Ok(ReplicationRecord {
        method,
        replication,
        mse,
        correct_zeros: cmp.correct_zeros,
        incorrect_zeros: cmp.incorrect_zeros,
        exact_recovery: cmp.exact_recovery,
        standardized_active_errors,
    })
}

fn run_replication(
    spec: &ScenarioSpec,
    replication: usize,
    methods: &[Method],
    config: &PipelineConfig,
) -> Vec<std::result::Result<ReplicationRecord, ReplicationFailure>> {
    let fail = |method: Method, e: Error| ReplicationFailure {
        method,
        replication,
        error: format!("{}: {e}", e.kind()),
    };
    let setup = generate_instance(spec, spec.instance_seed(replication)).and_then(|instance| {
        let data = generate_data(&instance, spec.n_obs, spec.sigma, spec.master_seed ^ replication as u64)?;
        Ok((instance, data))
    });
    let (instance, data) = match setup {
        Ok(s) => s,
        Err(e) => return methods.iter().map(|&m| Err(fail(m, e.clone()))).collect(),
    };
    let needs_first_step = methods
        .iter()
        .any(|m| matches!(m, Method::Estimator(k) if k.is_adaptive()));
    let first_step = needs_first_step.then(|| first_step_estimator(&data, config.family, &config.solver));

    methods
        .iter()
        .map(|&method| {
            let theta = match method {
                Method::TruthOracle => oracle_fit(&data, &instance, config),
                Method::Estimator(kind) => {
                    let first = match (&first_step, kind.is_adaptive()) {
                        (Some(Err(e)), true) => Err(e.clone()),
                        (Some(Ok(f)), _) => Ok(f.clone()),
                        // unused by non-adaptive kinds
                        _ => Ok(DVector::zeros(data.dim())),
                    };
                    first
                        .and_then(|f| fit_estimator_with_first_step(&data, &instance.groups, kind, config, &f))
                        .map(|fit| fit.fit.theta_hat)
                }
            };
            theta
                .and_then(|t| score_fit(method, replication, &t, &data, &instance, config))
                .map_err(|e| fail(method, e))
        })
        .collect()
}

/// Runs every method on `spec.replications` independent replications.
pub fn run_scenario(spec: &ScenarioSpec, methods: &[Method], config: &PipelineConfig) -> Result<ScenarioReport> {
    spec.validate()?;
    config.validate()?;
    if methods.is_empty() {
        return Err(Error::InvalidConfig("no methods given".into()));
    }
    let outcomes: Vec<_> = (0..spec.replications)
        .into_par_iter()
        .map(|r| run_replication(spec, r, methods, config))
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes.into_iter().flatten() {
        match outcome {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    let aggregate = methods
        .iter()
        .map(|&m| aggregate_method(m, &records, &failures))
        .collect();
    Ok(ScenarioReport {
        spec: spec.clone(),
        records,
        failures,
        aggregate,
    })
}

fn aggregate_method(method: Method, records: &[ReplicationRecord], failures: &[ReplicationFailure]) -> AggregateRow {
    let own: Vec<&ReplicationRecord> = records.iter().filter(|r| r.method == method).collect();
    let n = own.len() as f64;
    let mean = |f: &dyn Fn(&ReplicationRecord) -> f64| {
        if own.is_empty() {
            f64::NAN
        } else {
            own.iter().map(|r| f(r)).sum::<f64>() / n
        }
    };
    AggregateRow {
        method,
        mse: mean(&|r| r.mse),
        correct_zeros: mean(&|r| r.correct_zeros as f64),
        incorrect_zeros: mean(&|r| r.incorrect_zeros as f64),
        exact_rate: mean(&|r| f64::from(u8::from(r.exact_recovery))),
        completed: own.len(),
        failed: failures.iter().filter(|f| f.method == method).count(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    #[serde(rename = "T")]
    pub n_obs: usize,
    pub dim: usize,
    pub completed: usize,
    pub failed: usize,
    pub recovery_rate: f64,
    /// Binomial standard error of `recovery_rate`.
    pub standard_error: f64,
}

/// Exact-recovery frequency of `method` at each sample size.
pub fn selection_consistency_curve(
    template: &ScenarioSpec,
    sizes: &[usize],
    method: Method,
    replications: usize,
    config: &PipelineConfig,
) -> Result<Vec<CurvePoint>> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(
            "sample sizes must be non-empty and increasing".into(),
        ));
    }
    sizes
        .iter()
        .map(|&n_obs| {
            let spec = ScenarioSpec {
                n_obs,
                replications,
                ..template.clone()
            };
            let report = run_scenario(&spec, &[method], config)?;
            let row = &report.aggregate[0];
            let p = row.exact_rate;
            Ok(CurvePoint {
                n_obs,
                dim: spec.dim(),
                completed: row.completed,
                failed: row.failed,
                recovery_rate: p,
                standard_error: (p * (1.0 - p) / row.completed as f64).sqrt(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateMoments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// Non-excess kurtosis (3 for a normal law).
    pub kurtosis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub n_records: usize,
    pub coordinates: Vec<CoordinateMoments>,
}

/// Sample moments of the standardized active errors over the records with
/// exact recovery.
pub fn normality_diagnostic(records: &[ReplicationRecord]) -> Result<MomentReport> {
    let errors: Vec<&Vec<f64>> = records
        .iter()
        .filter(|r| r.exact_recovery)
        .filter_map(|r| r.standardized_active_errors.as_ref())
        .collect();
    if errors.len() < MIN_RECOVERIES {
        return Err(Error::InsufficientRecoveries {
            found: errors.len(),
            required: MIN_RECOVERIES,
        });
    }
    let width = errors[0].len();
    if errors.iter().any(|e| e.len() != width) {
        return Err(Error::InvalidConfig(
            "records disagree on the active-set size; use a fixed instance".into(),
        ));
    }
    let n = errors.len() as f64;
    let coordinates = (0..width)
        .map(|j| {
            let mean = errors.iter().map(|e| e[j]).sum::<f64>() / n;
            let central = |p: i32| errors.iter().map(|e| (e[j] - mean).powi(p)).sum::<f64>() / n;
            let m2 = central(2);
            CoordinateMoments {
                mean,
                variance: m2 * n / (n - 1.0),
                skewness: central(3) / m2.powf(1.5),
                kurtosis: central(4) / (m2 * m2),
            }
        })
        .collect();
    Ok(MomentReport {
        n_records: errors.len(),
        coordinates,
    })
}

fn csv_error(e: impl std::fmt::Display) -> Error {
    Error::Csv(e.to_string())
}

/// One row per (method, replication): `method,rep,mse,C,IC,exact`.
pub fn write_replications_csv<W: Write>(records: &[ReplicationRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "rep", "mse", "C", "IC", "exact"])
        .map_err(csv_error)?;
    for r in records {
        w.write_record([
            r.method.name().to_string(),
            r.replication.to_string(),
            format!("{:.12e}", r.mse),
            r.correct_zeros.to_string(),
            r.incorrect_zeros.to_string(),
            r.exact_recovery.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(csv_error)
}

/// Aggregated table: `method,mse,C,IC,exact_rate`.
pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "mse", "C", "IC", "exact_rate"])
        .map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.method.name().to_string(),
            format!("{:.12e}", r.mse),
            format!("{:.12}", r.correct_zeros),
            format!("{:.12}", r.incorrect_zeros),
            format!("{:.12}", r.exact_rate),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(csv_error)
}

pub fn write_curve_csv<W: Write>(method: Method, points: &[CurvePoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "T", "d", "completed", "failed", "recovery_rate", "se"])
        .map_err(csv_error)?;
    for p in points {
        w.write_record([
            method.name().to_string(),
            p.n_obs.to_string(),
            p.dim.to_string(),
            p.completed.to_string(),
            p.failed.to_string(),
            format!("{:.12}", p.recovery_rate),
            format!("{:.12}", p.standard_error),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(csv_error)
}

/// Markdown rendering of the aggregate table, preceded by the design row.
pub fn aggregate_markdown(spec: &ScenarioSpec, rows: &[AggregateRow]) -> String {
    let mut out = String::new();
    let d = spec.dim();
    let _ = writeln!(out, "| T | d_T | N_g | S | A |");
    let _ = writeln!(out, "|---|---|---|---|---|");
    let _ = writeln!(
        out,
        "| {} | {} | {} | {} | {} |\n",
        spec.n_obs,
        d,
        spec.n_groups,
        spec.n_active_groups(),
        spec.n_active()
    );
    let _ = writeln!(out, "| Method | MSE | C | IC | Exact | Failed |");
    let _ = writeln!(out, "|---|---|---|---|---|---|");
    let _ = writeln!(out, "| Truth | 0 | {} | 0 | 1 | 0 |", d - spec.n_active());
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {:.4} | {:.2} | {:.2} | {:.2} | {} |",
            r.method.label(),
            r.mse,
            r.correct_zeros,
            r.incorrect_zeros,
            r.exact_rate,
            r.failed
        );
    }
    out
}
