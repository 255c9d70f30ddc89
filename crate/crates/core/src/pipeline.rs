//! The estimation pipeline: first-step estimate, penalty weights for each
//! estimator kind, cross-validated tuning and the final penalized fit.
//!
//! Tuning pairs are searched on a multiplicative grid around the
//! rate-implied `(λ_T, γ_T) = (T^β, T^α)`. Cross-validation folds assign row
//! `i` to fold `i mod K`. Fold fits keep the per-observation penalty levels
//! `λ/T` and `γ/T` of the full sample, so a selected pair means the same
//! thing on a fold as on the full data.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::GroupStructure;
use crate::loss::{Dataset, Loss, LossFamily};
use crate::penalty::{adaptive_weights, tuning_from_rates, AdaptiveConfig, PenaltySpec};
use crate::solver::{FitResult, Problem, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Lasso,
    AdaptiveLasso,
    GroupLasso,
    AdaptiveGroupLasso,
    Sgl,
    AdaptiveSgl,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::Lasso,
        EstimatorKind::AdaptiveLasso,
        EstimatorKind::GroupLasso,
        EstimatorKind::AdaptiveGroupLasso,
        EstimatorKind::Sgl,
        EstimatorKind::AdaptiveSgl,
    ];

    pub fn is_adaptive(self) -> bool {
        matches!(
            self,
            EstimatorKind::AdaptiveLasso | EstimatorKind::AdaptiveGroupLasso | EstimatorKind::AdaptiveSgl
        )
    }

    /// Whether the ℓ¹ term is in use.
    pub fn uses_l1(self) -> bool {
        !matches!(self, EstimatorKind::GroupLasso | EstimatorKind::AdaptiveGroupLasso)
    }

    /// Whether the group-norm term is in use.
    pub fn uses_group(self) -> bool {
        !matches!(self, EstimatorKind::Lasso | EstimatorKind::AdaptiveLasso)
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Lasso => "lasso",
            EstimatorKind::AdaptiveLasso => "adaptive_lasso",
            EstimatorKind::GroupLasso => "group_lasso",
            EstimatorKind::AdaptiveGroupLasso => "adaptive_group_lasso",
            EstimatorKind::Sgl => "sgl",
            EstimatorKind::AdaptiveSgl => "adaptive_sgl",
        }
    }

    /// Short label used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Lasso => "Lasso",
            EstimatorKind::AdaptiveLasso => "aLasso",
            EstimatorKind::GroupLasso => "GLasso",
            EstimatorKind::AdaptiveGroupLasso => "AGLasso",
            EstimatorKind::Sgl => "SGL",
            EstimatorKind::AdaptiveSgl => "ASGL",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s || k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown estimator kind '{s}'")))
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Group weights of the non-adaptive group penalties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XiScale {
    #[default]
    Unit,
    SqrtSize,
}

/// How the tuning pair is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Tuning {
    /// K-fold cross-validation over the grid.
    #[default]
    CrossValidation,
    /// `λ = lambda_scale · T^lambda_exponent`, `γ = gamma_scale · T^gamma_exponent`.
    Fixed {
        lambda_scale: f64,
        lambda_exponent: f64,
        gamma_scale: f64,
        gamma_exponent: f64,
    },
}

pub const DEFAULT_GRID_FACTORS: [f64; 9] = [0.01, 0.0316, 0.1, 0.316, 1.0, 3.16, 10.0, 31.6, 100.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub family: LossFamily,
    pub adaptive: AdaptiveConfig,
    pub solver: SolverConfig,
    pub cv_folds: usize,
    pub grid_factors: Vec<f64>,
    pub xi_scale: XiScale,
    pub tuning: Tuning,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            family: LossFamily::Squared,
            adaptive: AdaptiveConfig::default(),
            solver: SolverConfig::default(),
            cv_folds: 5,
            grid_factors: DEFAULT_GRID_FACTORS.to_vec(),
            xi_scale: XiScale::Unit,
            tuning: Tuning::CrossValidation,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.adaptive.validate()?;
        self.solver.validate()?;
        if self.cv_folds < 2 {
            return Err(Error::InvalidConfig(format!(
                "cv_folds must be >= 2, got {}",
                self.cv_folds
            )));
        }
        if self.grid_factors.is_empty() || self.grid_factors.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::InvalidConfig(
                "grid_factors must be non-empty and strictly positive".into(),
            ));
        }
        Ok(())
    }
}

/// Unpenalized M-estimate: least squares by QR, logistic regression by
/// damped Newton.
pub fn first_step_estimator(data: &Dataset, family: LossFamily, config: &SolverConfig) -> Result<DVector<f64>> {
    family.validate(data)?;
    let (t, d) = (data.n_obs(), data.dim());
    if t <= d {
        return Err(Error::IllPosed(format!(
            "first-step estimate needs T > d (T = {t}, d = {d})"
        )));
    }
    match family {
        LossFamily::Squared => least_squares(data),
        LossFamily::Logistic => logistic_newton(data, config.max_outer_iters.min(200)),
    }
}

fn least_squares(data: &Dataset) -> Result<DVector<f64>> {
    let qr = data.design().clone().qr();
    let r = qr.r();
    let diag = r.diagonal().map(f64::abs);
    if !(diag.min() > 1e-10 * diag.max()) {
        return Err(Error::IllPosed("design matrix is rank deficient".into()));
    }
    let qty = qr.q().tr_mul(data.response());
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| Error::IllPosed("triangular solve failed".into()))
}

fn logistic_newton(data: &Dataset, max_iters: usize) -> Result<DVector<f64>> {
    let family = LossFamily::Logistic;
    let mut theta = DVector::zeros(data.dim());
    let mut value = family.value(data, &theta)?;
    for _ in 0..max_iters {
        let score = family.score(data, &theta)?;
        if score.norm() <= 1e-11 {
            return separation_check(data, theta);
        }
        let hessian = family.hessian(data, &theta)?;
        let direction = hessian
            .cholesky()
            .ok_or_else(|| Error::IllPosed("logistic Hessian is singular".into()))?
            .solve(&(-&score));
        let slope = score.dot(&direction);
        let mut step = 1.0;
        loop {
            let cand = &theta + &direction * step;
            let cand_value = family.value(data, &cand)?;
            if cand_value <= value + 1e-4 * step * slope {
                theta = cand;
                value = cand_value;
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                // no further decrease is representable
                return if family.score(data, &theta)?.norm() <= 1e-8 {
                    Ok(theta)
                } else {
                    Err(Error::MaxIterations(max_iters))
                };
            }
        }
    }
    Err(Error::MaxIterations(max_iters))
}

/// A logistic fit that classifies every observation correctly has no finite
/// minimizer; the small score only reflects saturation.
fn separation_check(data: &Dataset, theta: DVector<f64>) -> Result<DVector<f64>> {
    let eta = data.linear_predictor(&theta);
    let separated = eta
        .iter()
        .zip(data.response().iter())
        .all(|(e, y)| (2.0 * y - 1.0) * e > 0.0);
    if separated {
        Err(Error::IllPosed(
            "responses are perfectly separated by the design".into(),
        ))
    } else {
        Ok(theta)
    }
}

/// Penalty weights of `kind`, with the rate-implied tuning pair. Terms not
/// used by `kind` get tuning 0.
pub fn penalty_template(
    data: &Dataset,
    groups: &GroupStructure,
    kind: EstimatorKind,
    config: &PipelineConfig,
    first_step: Option<&DVector<f64>>,
) -> Result<PenaltySpec> {
    let n = data.n_obs();
    let (lambda, gamma) = tuning_from_rates(&config.adaptive, n);
    let (alpha, xi) = if kind.is_adaptive() {
        let owned;
        let theta = match first_step {
            Some(t) => t,
            None => {
                owned = first_step_estimator(data, config.family, &config.solver)?;
                &owned
            }
        };
        adaptive_weights(theta, groups, &config.adaptive, n)?
    } else {
        let xi = match config.xi_scale {
            XiScale::Unit => vec![1.0; groups.n_groups()],
            XiScale::SqrtSize => groups.sizes().iter().map(|&c| (c as f64).sqrt()).collect(),
        };
        (vec![1.0; groups.dim()], xi)
    };
    Ok(PenaltySpec::with_weights(
        if kind.uses_l1() { lambda } else { 0.0 },
        if kind.uses_group() { gamma } else { 0.0 },
        alpha,
        xi,
    ))
}

/// Candidate tuning pairs: the full factor × factor grid when both terms are
/// in use, a one-dimensional grid otherwise.
pub fn tuning_grid(template: &PenaltySpec, kind: EstimatorKind, factors: &[f64]) -> Vec<(f64, f64)> {
    match (kind.uses_l1(), kind.uses_group()) {
        (true, true) => factors
            .iter()
            .flat_map(|&g| factors.iter().map(move |&l| (l * template.lambda, g * template.gamma)))
            .collect(),
        (true, false) => factors.iter().map(|&l| (l * template.lambda, 0.0)).collect(),
        (false, true) => factors.iter().map(|&g| (0.0, g * template.gamma)).collect(),
        (false, false) => unreachable!("every estimator kind uses at least one penalty"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    pub grid: Vec<(f64, f64)>,
    pub mean_validation_loss: Vec<f64>,
    pub standard_error: Vec<f64>,
    pub selected: (f64, f64),
    pub selected_index: usize,
    pub one_se_selected: (f64, f64),
    /// Fold fits that stopped at the iteration limit.
    pub nonconverged_fits: usize,
}

/// Cross-validation over the tuning grid of `kind`.
pub fn cross_validate(
    data: &Dataset,
    groups: &GroupStructure,
    kind: EstimatorKind,
    config: &PipelineConfig,
) -> Result<CvReport> {
    config.validate()?;
    let template = penalty_template(data, groups, kind, config, None)?;
    cross_validate_with(data, groups, kind, &template, config)
}

/// Cross-validation with precomputed penalty weights.
pub fn cross_validate_with(
    data: &Dataset,
    groups: &GroupStructure,
    kind: EstimatorKind,
    template: &PenaltySpec,
    config: &PipelineConfig,
) -> Result<CvReport> {
    let n = data.n_obs();
    let k = config.cv_folds;
    if k > n {
        return Err(Error::InvalidConfig(format!("cv_folds = {k} exceeds T = {n}")));
    }
    let grid = tuning_grid(template, kind, &config.grid_factors);
    // warm-started path from the largest to the smallest penalty
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| {
        let sa = grid[a].0 + grid[a].1;
        let sb = grid[b].0 + grid[b].1;
        sb.partial_cmp(&sa).unwrap().then(a.cmp(&b))
    });

    let fold_results: Vec<Result<(Vec<f64>, usize)>> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let (train_rows, valid_rows): (Vec<usize>, Vec<usize>) = (0..n).partition(|i| i % k != fold);
            let train = data.select_rows(&train_rows);
            let valid = data.select_rows(&valid_rows);
            let scale = train.n_obs() as f64 / n as f64;
            let problem = Problem::new(&config.family, &train, groups)?;
            let mut losses = vec![0.0; grid.len()];
            let mut nonconverged = 0;
            let mut warm: Option<DVector<f64>> = None;
            for &idx in &order {
                let (lambda, gamma) = grid[idx];
                let spec = template.with_tuning(lambda * scale, gamma * scale);
                let fit = problem.solve(&spec, &config.solver, warm.as_ref())?;
                if !fit.converged {
                    nonconverged += 1;
                }
                losses[idx] = config.family.value(&valid, &fit.theta_hat)?;
                warm = Some(fit.theta_hat);
            }
            Ok((losses, nonconverged))
        })
        .collect();

    let mut per_fold = Vec::with_capacity(k);
    let mut nonconverged_fits = 0;
    for r in fold_results {
        let (losses, nc) = r?;
        per_fold.push(losses);
        nonconverged_fits += nc;
    }

    let kf = k as f64;
    let mean_validation_loss: Vec<f64> = (0..grid.len())
        .map(|g| per_fold.iter().map(|f| f[g]).sum::<f64>() / kf)
        .collect();
    let standard_error: Vec<f64> = (0..grid.len())
        .map(|g| {
            let m = mean_validation_loss[g];
            let var = per_fold.iter().map(|f| (f[g] - m).powi(2)).sum::<f64>() / (kf - 1.0);
            (var / kf).sqrt()
        })
        .collect();

    let strength = |i: usize| grid[i].0 + grid[i].1;
    let mut best = 0;
    for i in 1..grid.len() {
        let (m, mb) = (mean_validation_loss[i], mean_validation_loss[best]);
        if m < mb || (m == mb && strength(i) > strength(best)) {
            best = i;
        }
    }
    let threshold = mean_validation_loss[best] + standard_error[best];
    let mut one_se = best;
    for i in 0..grid.len() {
        if mean_validation_loss[i] <= threshold
            && (strength(i) > strength(one_se)
                || (strength(i) == strength(one_se) && mean_validation_loss[i] < mean_validation_loss[one_se]))
        {
            one_se = i;
        }
    }

    Ok(CvReport {
        folds: k,
        selected: grid[best],
        selected_index: best,
        one_se_selected: grid[one_se],
        grid,
        mean_validation_loss,
        standard_error,
        nonconverged_fits,
    })
}

/// A fitted estimator with the penalty it was fitted at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorFit {
    pub kind: EstimatorKind,
    pub fit: FitResult,
    pub penalty: PenaltySpec,
    pub cv: Option<CvReport>,
}

/// Builds the weights of `kind`, selects the tuning pair and refits on the
/// full sample.
pub fn fit_estimator(
    data: &Dataset,
    groups: &GroupStructure,
    kind: EstimatorKind,
    config: &PipelineConfig,
) -> Result<EstimatorFit> {
    config.validate()?;
    let template = penalty_template(data, groups, kind, config, None)?;
    fit_with_template(data, groups, kind, &template, config)
}

/// As [`fit_estimator`], reusing a first-step estimate for adaptive kinds.
pub fn fit_estimator_with_first_step(
    data: &Dataset,
    groups: &GroupStructure,
    kind: EstimatorKind,
    config: &PipelineConfig,
    first_step: &DVector<f64>,
) -> Result<EstimatorFit> {
    config.validate()?;
    let template = penalty_template(data, groups, kind, config, Some(first_step))?;
    fit_with_template(data, groups, kind, &template, config)
}

fn fit_with_template(
    data: &Dataset,
    groups: &GroupStructure,
    kind: EstimatorKind,
    template: &PenaltySpec,
    config: &PipelineConfig,
) -> Result<EstimatorFit> {
    let n = data.n_obs() as f64;
    let (penalty, cv) = match config.tuning {
        Tuning::CrossValidation => {
            let cv = cross_validate_with(data, groups, kind, template, config)?;
            (template.with_tuning(cv.selected.0, cv.selected.1), Some(cv))
        }
        Tuning::Fixed {
            lambda_scale,
            lambda_exponent,
            gamma_scale,
            gamma_exponent,
        } => {
            let lambda = if kind.uses_l1() {
                lambda_scale * n.powf(lambda_exponent)
            } else {
                0.0
            };
            let gamma = if kind.uses_group() {
                gamma_scale * n.powf(gamma_exponent)
            } else {
                0.0
            };
            (template.with_tuning(lambda, gamma), None)
        }
    };
    let problem = Problem::new(&config.family, data, groups)?;
    let fit = problem.solve(&penalty, &config.solver, None)?.into_converged()?;
    Ok(EstimatorFit { kind, fit, penalty, cv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::kkt_verify;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_data(seed: u64, t: usize, beta: &[f64], sigma: f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = beta.len();
        let x = DMatrix::from_fn(t, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = DVector::from_column_slice(beta);
        let noise = DVector::from_fn(t, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
        Dataset::new(x.clone(), &x * b + noise).unwrap()
    }

    #[test]
    fn first_step_recovers_noiseless_coefficients() {
        let beta = [0.5, -1.0, 0.0, 2.0];
        let data = gaussian_data(1, 30, &beta, 0.0);
        let est = first_step_estimator(&data, LossFamily::Squared, &SolverConfig::default()).unwrap();
        assert!((est - DVector::from_column_slice(&beta)).amax() < 1e-10);
    }

    #[test]
    fn first_step_needs_more_rows_than_columns() {
        let data = gaussian_data(2, 3, &[1.0, 1.0, 1.0, 1.0], 0.1);
        assert!(matches!(
            first_step_estimator(&data, LossFamily::Squared, &SolverConfig::default()),
            Err(Error::IllPosed(_))
        ));
    }

    #[test]
    fn first_step_is_stationary() {
        let data = gaussian_data(3, 80, &[0.3, 0.0, -0.7, 0.1, 0.0], 0.5);
        let est = first_step_estimator(&data, LossFamily::Squared, &SolverConfig::default()).unwrap();
        assert!(LossFamily::Squared.score(&data, &est).unwrap().norm() <= 1e-8);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(200, 3, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(200, |i, _| {
            let p = crate::loss::sigmoid(x[(i, 0)] - 0.5 * x[(i, 2)]);
            f64::from(rng.random_bool(p) as u8)
        });
        let data = Dataset::new(x, y).unwrap();
        let est = first_step_estimator(&data, LossFamily::Logistic, &SolverConfig::default()).unwrap();
        assert!(LossFamily::Logistic.score(&data, &est).unwrap().norm() <= 1e-8);
    }

    #[test]
    fn separable_logistic_does_not_converge() {
        let x = DMatrix::from_column_slice(6, 1, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        let y = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let data = Dataset::new(x, y).unwrap();
        assert!(matches!(
            first_step_estimator(&data, LossFamily::Logistic, &SolverConfig::default()),
            Err(Error::IllPosed(_) | Error::MaxIterations(_))
        ));
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in EstimatorKind::ALL {
            assert_eq!(kind.name().parse::<EstimatorKind>().unwrap(), kind);
            assert_eq!(kind.label().parse::<EstimatorKind>().unwrap(), kind);
        }
        assert!("ridge".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn grid_shapes() {
        let g = GroupStructure::new(&[2, 2]).unwrap();
        let t = PenaltySpec::unweighted(2.0, 3.0, &g);
        assert_eq!(tuning_grid(&t, EstimatorKind::Sgl, &[1.0, 2.0]).len(), 4);
        assert_eq!(
            tuning_grid(&t, EstimatorKind::Lasso, &[1.0, 2.0]),
            vec![(2.0, 0.0), (4.0, 0.0)]
        );
        assert_eq!(tuning_grid(&t, EstimatorKind::GroupLasso, &[1.0]), vec![(0.0, 3.0)]);
    }

    #[test]
    fn single_grid_point_is_selected() {
        let data = gaussian_data(5, 60, &[1.0, 0.0, 0.5, 0.0], 0.3);
        let g = GroupStructure::new(&[2, 2]).unwrap();
        let config = PipelineConfig {
            grid_factors: vec![3.0, 3.0, 3.0],
            ..PipelineConfig::default()
        };
        let cv = cross_validate(&data, &g, EstimatorKind::Sgl, &config).unwrap();
        let (l, gm) = tuning_from_rates(&config.adaptive, 60);
        assert_eq!(cv.selected, (3.0 * l, 3.0 * gm));
    }

    #[test]
    fn selected_pair_beats_largest_penalty() {
        let data = gaussian_data(6, 100, &[1.0, -0.8, 0.0, 0.0, 0.6, 0.0], 0.3);
        let g = GroupStructure::new(&[3, 3]).unwrap();
        let cv = cross_validate(&data, &g, EstimatorKind::Sgl, &PipelineConfig::default()).unwrap();
        let largest = (0..cv.grid.len())
            .max_by(|&a, &b| {
                (cv.grid[a].0 + cv.grid[a].1)
                    .partial_cmp(&(cv.grid[b].0 + cv.grid[b].1))
                    .unwrap()
            })
            .unwrap();
        assert!(cv.mean_validation_loss[cv.selected_index] <= cv.mean_validation_loss[largest]);
        let sel = cv.selected.0 + cv.selected.1;
        assert!(cv.one_se_selected.0 + cv.one_se_selected.1 >= sel);
    }

    #[test]
    fn pure_noise_selects_large_penalties() {
        let config = PipelineConfig::default();
        // upper half of the grid: at or above the rate-implied level
        let hits = (0..50u64)
            .filter(|&seed| {
                let data = gaussian_data(100 + seed, 100, &[0.0; 5], 1.0);
                let g = GroupStructure::singletons(5).unwrap();
                let cv = cross_validate(&data, &g, EstimatorKind::Lasso, &config).unwrap();
                config.grid_factors[cv.selected_index] >= 1.0
            })
            .count();
        assert!(hits >= 40, "{hits} of 50");
    }
    #[test]
    fn lasso_equals_sgl_without_group_term_on_singletons() {
        let data = gaussian_data(7, 80, &[0.9, 0.0, -0.4, 0.0, 0.2], 0.4);
        let g = GroupStructure::singletons(5).unwrap();
        let config = PipelineConfig::default();
        let lasso = fit_estimator(&data, &g, EstimatorKind::Lasso, &config).unwrap();
        let sgl_spec = PenaltySpec::unweighted(lasso.penalty.lambda, 0.0, &g);
        let sgl = crate::solver::solve(&LossFamily::Squared, &data, &g, &sgl_spec, &config.solver, None).unwrap();
        assert!((lasso.fit.theta_hat - sgl.theta_hat).amax() <= 1e-7);
    }

    #[test]
    fn fitted_estimators_pass_their_own_certificate() {
        let data = gaussian_data(8, 120, &[0.8, 0.0, 0.0, 0.5, -0.6, 0.0, 0.0, 0.0], 0.3);
        let g = GroupStructure::new(&[3, 3, 2]).unwrap();
        let config = PipelineConfig::default();
        for kind in EstimatorKind::ALL {
            let fit = fit_estimator(&data, &g, kind, &config).unwrap();
            let r = kkt_verify(&LossFamily::Squared, &data, &g, &fit.penalty, &fit.fit.theta_hat).unwrap();
            assert!(r.residual <= config.solver.tol, "{kind}: {}", r.residual);
            if !kind.uses_l1() {
                assert_eq!(fit.penalty.lambda, 0.0);
            }
            if !kind.uses_group() {
                assert_eq!(fit.penalty.gamma, 0.0);
            }
        }
    }

    #[test]
    fn sqrt_size_scaling_of_group_weights() {
        let data = gaussian_data(9, 50, &[0.5; 5], 0.3);
        let g = GroupStructure::new(&[4, 1]).unwrap();
        let config = PipelineConfig {
            xi_scale: XiScale::SqrtSize,
            ..PipelineConfig::default()
        };
        let t = penalty_template(&data, &g, EstimatorKind::GroupLasso, &config, None).unwrap();
        assert_eq!(t.xi_weights, vec![2.0, 1.0]);
        assert_eq!(t.lambda, 0.0);
    }

    #[test]
    fn fixed_tuning_skips_cross_validation() {
        let data = gaussian_data(10, 64, &[0.5, 0.0, 0.3, 0.0], 0.3);
        let g = GroupStructure::new(&[2, 2]).unwrap();
        let config = PipelineConfig {
            tuning: Tuning::Fixed {
                lambda_scale: 0.5,
                lambda_exponent: 0.5,
                gamma_scale: 0.5,
                gamma_exponent: 0.5,
            },
            ..PipelineConfig::default()
        };
        let fit = fit_estimator(&data, &g, EstimatorKind::Sgl, &config).unwrap();
        assert!(fit.cv.is_none());
        assert_eq!((fit.penalty.lambda, fit.penalty.gamma), (4.0, 4.0));
    }

    #[test]
    fn adaptive_weights_penalize_noise_coordinates_more() {
        // First step near zero on coordinates 2..4 (below e_T scale) and
        // above 10·e_T on the signals.
        let t = 2000;
        let beta = [3.0, 2.5, 0.0, 0.0, 0.0, 3.5];
        let data = gaussian_data(11, t, &beta, 0.05);
        let g = GroupStructure::new(&[2, 3, 1]).unwrap();
        let config = PipelineConfig::default();
        let first = first_step_estimator(&data, LossFamily::Squared, &config.solver).unwrap();
        let e_t = config.adaptive.shift(t);
        for j in [0, 1, 5] {
            assert!(first[j] > 10.0 * e_t);
        }
        for j in 2..5 {
            assert!(first[j].abs() < e_t);
        }
        let template = penalty_template(&data, &g, EstimatorKind::AdaptiveSgl, &config, Some(&first)).unwrap();
        let bound = 10f64.powf(config.adaptive.eta) / 2.0;
        for z in 2..5 {
            for s in [0, 1, 5] {
                assert!(template.alpha_weights[z] >= bound * template.alpha_weights[s]);
            }
        }
    }

    #[test]
    fn cv_is_invariant_to_joint_row_permutation() {
        // Permuting rows within each residue class mod K leaves every fold's
        // row set unchanged.
        let data = gaussian_data(12, 50, &[0.7, 0.0, -0.3, 0.0], 0.3);
        let g = GroupStructure::new(&[2, 2]).unwrap();
        let config = PipelineConfig::default();
        let k = config.cv_folds;
        let mut perm: Vec<usize> = (0..50).collect();
        for r in 0..k {
            let class: Vec<usize> = (0..50).filter(|i| i % k == r).collect();
            for (a, b) in class.iter().zip(class.iter().rev()) {
                perm[*a] = *b;
            }
        }
        let permuted = data.select_rows(&perm);
        let a = cross_validate(&data, &g, EstimatorKind::Sgl, &config).unwrap();
        let b = cross_validate(&permuted, &g, EstimatorKind::Sgl, &config).unwrap();
        assert_eq!(a.selected, b.selected);
    }
}
