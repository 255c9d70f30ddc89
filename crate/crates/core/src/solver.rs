//! Block coordinate descent for the sparse-group penalized criterion
//!
//! ```text
//! minimize  L(θ) + (λ/T) Σ_j α_j |θ_j| + (γ/T) Σ_l ξ_l ‖θ^(l)‖₂
//! ```
//!
//! Each outer sweep visits the groups in order. A group is first screened
//! with the group drop test, evaluated on the score of the smooth part at
//! `θ` with that block set to zero: if the soft-thresholded block score has
//! norm at most `γξ_l/T`, zero is the block minimizer and the block is set
//! to exactly zero. Otherwise the block subproblem is solved:
//!
//! * least squares: cyclic coordinate descent on the block, each coordinate
//!   minimized exactly (soft-threshold at zero, one-dimensional root of the
//!   stationarity equation with the group-norm curvature term otherwise),
//!   working from the Gram matrix;
//! * any other loss: proximal gradient on the block with an Armijo
//!   backtracking line search.
//!
//! Zero coefficients are always produced by thresholding and are exactly
//! `0.0`. The outer loop stops when the largest coordinate change of a sweep
//! is at most `tol` and the KKT residual of [`kkt_verify`] is at most `tol`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::groups::{ActiveSets, GroupStructure};
use crate::loss::{spd_inverse, Dataset, Loss};
use crate::penalty::{penalty_value, PenaltySpec};

const BACKTRACK_SHRINK: f64 = 0.5;
const ARMIJO_CONSTANT: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;
const MAX_INNER_SWEEPS: usize = 1000;
const MAX_PROX_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepRule {
    /// Exact coordinate minimization for least squares, backtracking otherwise.
    #[default]
    Auto,
    /// Exact coordinate minimization; least squares only.
    Exact,
    /// Block proximal gradient with backtracking; any smooth loss.
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_outer_iters: usize,
    pub tol: f64,
    pub inner_tol: f64,
    pub step_rule: StepRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_outer_iters: 10_000,
            tol: 1e-8,
            inner_tol: 1e-10,
            step_rule: StepRule::Auto,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.inner_tol > 0.0) || self.inner_tol > self.tol {
            return Err(Error::InvalidConfig(format!(
                "solver tolerances must satisfy 0 < inner_tol <= tol (tol = {}, inner_tol = {})",
                self.tol, self.inner_tol
            )));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidConfig("max_outer_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of [`solve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(with = "crate::dvec_serde")]
    pub theta_hat: DVector<f64>,
    pub active: ActiveSets,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after initialization and after every outer sweep.
    #[serde(skip)]
    pub objective_history: Vec<f64>,
}

impl FitResult {
    /// Turns a non-converged fit into `MaxIterations`.
    pub fn into_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::MaxIterations(self.iterations))
        }
    }
}

/// `sign(x) · max(|x| − t, 0)`.
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Whole-group screening: true iff `‖S(score, l1_levels)‖₂ ≤ group_level`.
/// Equality drops the group.
pub fn group_drop_test(score_block: &[f64], l1_levels: &[f64], group_level: f64) -> bool {
    debug_assert_eq!(score_block.len(), l1_levels.len());
    let sq: f64 = score_block
        .iter()
        .zip(l1_levels)
        .map(|(&s, &a)| soft_threshold(s, a).powi(2))
        .sum();
    sq.sqrt() <= group_level
}

/// Within-group screening: true iff `|score| ≤ l1_level`.
pub fn coefficient_drop_test(score_coord: f64, l1_level: f64) -> bool {
    score_coord.abs() <= l1_level
}

/// Penalized objective `L(θ) + penalty(θ)`.
pub fn objective<L: Loss + ?Sized>(
    loss: &L,
    data: &Dataset,
    groups: &GroupStructure,
    spec: &PenaltySpec,
    theta: &DVector<f64>,
) -> Result<f64> {
    Ok(loss.value(data, theta)? + penalty_value(theta, groups, spec, data.n_obs())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupKkt {
    pub group: usize,
    pub is_zero: bool,
    pub residual: f64,
}

/// Violation of the subgradient stationarity system, overall and per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub residual: f64,
    pub groups: Vec<GroupKkt>,
}

/// Residual of the optimality conditions at `theta`.
///
/// For a zero group: `max(0, ‖S(score_k, λα/T)‖₂ − γξ_k/T)`. In a non-zero
/// group, a zero coordinate contributes `max(0, |score_i| − λα_i/T)` and a
/// non-zero coordinate `|score_i + (λα_i/T) sign θ_i + (γξ_k/T) θ_i/‖θ^(k)‖₂|`.
/// The residual is the maximum over all groups; it is zero iff the
/// stationarity system holds exactly.
pub fn kkt_verify<L: Loss + ?Sized>(
    loss: &L,
    data: &Dataset,
    groups: &GroupStructure,
    spec: &PenaltySpec,
    theta: &DVector<f64>,
) -> Result<KktReport> {
    check_len(groups.dim(), data.dim())?;
    check_len(groups.dim(), theta.len())?;
    spec.validate(groups)?;
    let score = loss.score(data, theta)?;
    let l1 = spec.l1_levels(data.n_obs());
    let grp = spec.group_levels(data.n_obs());
    let mut reports = Vec::with_capacity(groups.n_groups());
    for (k, range) in groups.ranges().enumerate() {
        let norm = groups.block_norm(theta, k);
        let residual = if norm == 0.0 {
            let sq: f64 = range.clone().map(|j| soft_threshold(score[j], l1[j]).powi(2)).sum();
            (sq.sqrt() - grp[k]).max(0.0)
        } else {
            range
                .clone()
                .map(|j| {
                    if theta[j] == 0.0 {
                        (score[j].abs() - l1[j]).max(0.0)
                    } else {
                        (score[j] + l1[j] * theta[j].signum() + grp[k] * theta[j] / norm).abs()
                    }
                })
                .fold(0.0, f64::max)
        };
        reports.push(GroupKkt {
            group: k,
            is_zero: norm == 0.0,
            residual,
        });
    }
    Ok(KktReport {
        residual: reports.iter().map(|g| g.residual).fold(0.0, f64::max),
        groups: reports,
    })
}

/// Minimizer over `t` of `½ h t² + q t + a |t| + b √(t² + s2)`.
fn coordinate_minimizer(h: f64, q: f64, a: f64, b: f64, s2: f64) -> f64 {
    if h <= 0.0 {
        return 0.0;
    }
    if s2 == 0.0 || b == 0.0 {
        return -soft_threshold(q, a + b) / h;
    }
    if q.abs() <= a {
        return 0.0;
    }
    // Solve h t + b t / √(t² + s2) = c on t > 0. The left side is increasing
    // and concave, so Newton from a point left of the root increases
    // monotonically to it.
    let c = q.abs() - a;
    let upper = c / h;
    let mut t = ((c - b) / h).max(0.0);
    for _ in 0..100 {
        let r = (t * t + s2).sqrt();
        let psi = h * t + b * t / r - c;
        let dpsi = h + b * s2 / (r * r * r);
        let next = (t - psi / dpsi).min(upper);
        if next <= t {
            break;
        }
        let done = next - t <= 1e-16 * next;
        t = next;
        if done {
            break;
        }
    }
    -q.signum() * t
}

/// Proximal map of `step·(Σ a_i|β_i| + b‖β‖₂)` at `v`, in place.
fn sgl_prox(v: &mut [f64], a: &[f64], b: f64, step: f64) {
    for (vi, &ai) in v.iter_mut().zip(a) {
        *vi = soft_threshold(*vi, step * ai);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = if norm > 0.0 {
        (1.0 - step * b / norm).max(0.0)
    } else {
        0.0
    };
    for vi in v.iter_mut() {
        *vi = if scale == 0.0 { 0.0 } else { *vi * scale };
    }
}

struct GramCache {
    /// X'X / T
    gram: DMatrix<f64>,
    /// X'y / T
    xty: DVector<f64>,
    /// y'y / (2T)
    half_yty: f64,
    /// Upper bound on the largest eigenvalue of each diagonal block.
    block_lipschitz: Vec<f64>,
}

/// A dataset, group structure and loss prepared for repeated solves (a
/// regularization path, cross-validation folds).
pub struct Problem<'a, L: Loss + ?Sized> {
    loss: &'a L,
    data: &'a Dataset,
    groups: &'a GroupStructure,
    cache: Option<GramCache>,
}

impl<'a, L: Loss + ?Sized> Problem<'a, L> {
    pub fn new(loss: &'a L, data: &'a Dataset, groups: &'a GroupStructure) -> Result<Self> {
        check_len(groups.dim(), data.dim())?;
        loss.validate(data)?;
        let cache = if loss.is_least_squares() {
            let t = data.n_obs() as f64;
            let x = data.design();
            let gram = x.tr_mul(x) / t;
            let xty = x.tr_mul(data.response()) / t;
            let half_yty = data.response().norm_squared() / (2.0 * t);
            let block_lipschitz = groups
                .ranges()
                .map(|r| {
                    r.clone()
                        .map(|i| r.clone().map(|j| gram[(i, j)].abs()).sum::<f64>())
                        .fold(0.0, f64::max)
                })
                .collect();
            Some(GramCache {
                gram,
                xty,
                half_yty,
                block_lipschitz,
            })
        } else {
            None
        };
        Ok(Self {
            loss,
            data,
            groups,
            cache,
        })
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn groups(&self) -> &GroupStructure {
        self.groups
    }

    pub fn objective(&self, spec: &PenaltySpec, theta: &DVector<f64>) -> Result<f64> {
        objective(self.loss, self.data, self.groups, spec, theta)
    }

    pub fn solve(
        &self,
        spec: &PenaltySpec,
        config: &SolverConfig,
        warm_start: Option<&DVector<f64>>,
    ) -> Result<FitResult> {
        config.validate()?;
        spec.validate(self.groups)?;
        let exact = match config.step_rule {
            StepRule::Auto => self.cache.is_some(),
            StepRule::Exact => {
                if self.cache.is_none() {
                    return Err(Error::InvalidConfig(
                        "exact coordinate steps require the squared loss".into(),
                    ));
                }
                true
            }
            StepRule::Backtracking => false,
        };
        if spec.is_zero() {
            self.check_identifiable()?;
        }
        let mut theta = match warm_start {
            Some(w) => {
                check_len(self.groups.dim(), w.len())?;
                w.clone()
            }
            None => DVector::zeros(self.groups.dim()),
        };
        let n = self.data.n_obs();
        let l1 = spec.l1_levels(n);
        let grp = spec.group_levels(n);

        let mut current = self.fast_objective(spec, &theta)?;
        let mut history = vec![current];
        let mut iterations = 0;
        let mut converged = false;
        let mut kkt = f64::INFINITY;
        while iterations < config.max_outer_iters {
            iterations += 1;
            let change = if exact {
                self.sweep_exact(&mut theta, &l1, &grp, config.inner_tol)
            } else {
                self.sweep_backtracking(&mut theta, &l1, &grp, config.inner_tol)?
            };
            current = self.fast_objective(spec, &theta)?;
            history.push(current);
            if change <= config.tol {
                kkt = kkt_verify(self.loss, self.data, self.groups, spec, &theta)?.residual;
                if kkt <= config.tol {
                    converged = true;
                    break;
                }
            }
        }
        if !converged {
            kkt = kkt_verify(self.loss, self.data, self.groups, spec, &theta)?.residual;
        }
        let objective = self.objective(spec, &theta)?;
        if !objective.is_finite() {
            return Err(Error::NonFiniteObjective);
        }
        let active = ActiveSets::from_theta(&theta, self.groups, 0.0)?;
        Ok(FitResult {
            theta_hat: theta,
            active,
            objective,
            kkt_residual: kkt,
            iterations,
            converged,
            objective_history: history,
        })
    }

    /// Without any penalty the least-squares criterion needs a full-rank
    /// design to have a unique minimizer.
    fn check_identifiable(&self) -> Result<()> {
        if let Some(cache) = &self.cache {
            if self.data.n_obs() <= self.data.dim() {
                return Err(Error::IllPosed(format!(
                    "unpenalized least squares needs T > d (T = {}, d = {})",
                    self.data.n_obs(),
                    self.data.dim()
                )));
            }
            spd_inverse(&cache.gram).map_err(|_| Error::IllPosed("design matrix is rank deficient".into()))?;
        }
        Ok(())
    }

    fn fast_objective(&self, spec: &PenaltySpec, theta: &DVector<f64>) -> Result<f64> {
        let value = match &self.cache {
            Some(c) => {
                0.5 * theta.dot(&(&c.gram * theta)) - theta.dot(&c.xty)
                    + c.half_yty
                    + penalty_value(theta, self.groups, spec, self.data.n_obs())?
            }
            None => self.objective(spec, theta)?,
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFiniteObjective)
        }
    }

    /// One outer sweep for least squares. Returns the largest coordinate
    /// change.
    fn sweep_exact(&self, theta: &mut DVector<f64>, l1: &[f64], grp: &[f64], inner_tol: f64) -> f64 {
        let cache = self.cache.as_ref().expect("gram cache");
        let g = &cache.gram;
        let mut grad = g * &*theta - &cache.xty;
        let mut max_change: f64 = 0.0;

        let update = |theta: &mut DVector<f64>, grad: &mut DVector<f64>, j: usize, value: f64| -> f64 {
            let delta = value - theta[j];
            if delta != 0.0 {
                grad.axpy(delta, &g.column(j), 1.0);
                theta[j] = value;
            }
            delta.abs()
        };

        for (k, range) in self.groups.ranges().enumerate() {
            let a = &l1[range.clone()];
            let b = grp[k];
            // score of the smooth part with this block set to zero
            let g0: Vec<f64> = range
                .clone()
                .map(|i| grad[i] - range.clone().map(|j| g[(i, j)] * theta[j]).sum::<f64>())
                .collect();
            let start = theta.rows_range(range.clone()).clone_owned();

            if group_drop_test(&g0, a, b) {
                for j in range.clone() {
                    update(theta, &mut grad, j, 0.0);
                }
            } else {
                // Block objective relative to the zero block:
                // f(β) = ½β'Gβ + g0'β + Σ a|β| + b‖β‖.
                let block_value = |theta: &DVector<f64>| -> f64 {
                    let beta = theta.rows_range(range.clone());
                    let mut quad = 0.0;
                    for (p, i) in range.clone().enumerate() {
                        for (q, j) in range.clone().enumerate() {
                            quad += beta[p] * g[(i, j)] * beta[q];
                        }
                    }
                    let lin: f64 = beta.iter().zip(&g0).map(|(x, s)| x * s).sum();
                    let pen: f64 = beta.iter().zip(a).map(|(x, w)| w * x.abs()).sum();
                    0.5 * quad + lin + pen + b * beta.norm()
                };
                if start.iter().all(|&v| v == 0.0) || block_value(theta) >= 0.0 {
                    // One proximal-gradient step from zero; it strictly
                    // decreases f below f(0) = 0, and coordinate descent
                    // never climbs back to the zero block from there.
                    let lip = cache.block_lipschitz[k];
                    let mut v: Vec<f64> = g0.iter().map(|s| -s / lip).collect();
                    sgl_prox(&mut v, a, b, 1.0 / lip);
                    for (p, j) in range.clone().enumerate() {
                        update(theta, &mut grad, j, v[p]);
                    }
                }
                for _ in 0..MAX_INNER_SWEEPS {
                    let mut inner_change: f64 = 0.0;
                    for (p, i) in range.clone().enumerate() {
                        let h = g[(i, i)];
                        let q = grad[i] - h * theta[i];
                        let s2: f64 = range.clone().filter(|&j| j != i).map(|j| theta[j] * theta[j]).sum();
                        let value = coordinate_minimizer(h, q, a[p], b, s2);
                        inner_change = inner_change.max(update(theta, &mut grad, i, value));
                    }
                    if inner_change <= inner_tol {
                        break;
                    }
                }
            }
            for (p, j) in range.clone().enumerate() {
                max_change = max_change.max((theta[j] - start[p]).abs());
            }
        }
        max_change
    }

    /// One outer sweep with block proximal gradient steps.
    fn sweep_backtracking(&self, theta: &mut DVector<f64>, l1: &[f64], grp: &[f64], inner_tol: f64) -> Result<f64> {
        let mut max_change: f64 = 0.0;
        let block_penalty = |beta: &[f64], a: &[f64], b: f64| -> f64 {
            let l1: f64 = beta.iter().zip(a).map(|(x, w)| w * x.abs()).sum();
            l1 + b * beta.iter().map(|x| x * x).sum::<f64>().sqrt()
        };
        for (k, range) in self.groups.ranges().enumerate() {
            let a = &l1[range.clone()];
            let b = grp[k];
            let start: Vec<f64> = theta.rows_range(range.clone()).iter().copied().collect();

            let mut zeroed = theta.clone();
            zeroed.rows_range_mut(range.clone()).fill(0.0);
            let g0 = self.loss.score(self.data, &zeroed)?;
            let g0: Vec<f64> = range.clone().map(|j| g0[j]).collect();
            if group_drop_test(&g0, a, b) {
                theta.rows_range_mut(range.clone()).fill(0.0);
            } else {
                let mut step = 1.0;
                let mut beta = start.clone();
                let mut loss_value = self.loss.value(self.data, theta)?;
                for _ in 0..MAX_PROX_ITERS {
                    let score = self.loss.score(self.data, theta)?;
                    let current = loss_value + block_penalty(&beta, a, b);
                    let mut accepted = None;
                    while step >= MIN_STEP {
                        let mut cand: Vec<f64> = beta
                            .iter()
                            .zip(range.clone())
                            .map(|(x, j)| x - step * score[j])
                            .collect();
                        sgl_prox(&mut cand, a, b, step);
                        let dist2: f64 = cand.iter().zip(&beta).map(|(c, x)| (c - x).powi(2)).sum();
                        if dist2 == 0.0 {
                            break;
                        }
                        let mut trial = theta.clone();
                        for (p, j) in range.clone().enumerate() {
                            trial[j] = cand[p];
                        }
                        let trial_loss = self.loss.value(self.data, &trial)?;
                        let trial_value = trial_loss + block_penalty(&cand, a, b);
                        // allowance for rounding in the loss evaluation
                        let slack = 8.0 * f64::EPSILON * current.abs().max(1.0);
                        if trial_value.is_finite() && trial_value <= current - ARMIJO_CONSTANT / step * dist2 + slack {
                            accepted = Some((trial, cand, trial_loss));
                            break;
                        }
                        step *= BACKTRACK_SHRINK;
                    }
                    let Some((trial, cand, trial_loss)) = accepted else {
                        break;
                    };
                    let change = cand.iter().zip(&beta).map(|(c, x)| (c - x).abs()).fold(0.0, f64::max);
                    *theta = trial;
                    beta = cand;
                    loss_value = trial_loss;
                    if change <= inner_tol {
                        break;
                    }
                }
            }
            for (p, j) in range.clone().enumerate() {
                max_change = max_change.max((theta[j] - start[p]).abs());
            }
        }
        Ok(max_change)
    }
}

/// Fits the sparse-group penalized criterion by block coordinate descent.
pub fn solve<L: Loss + ?Sized>(
    loss: &L,
    data: &Dataset,
    groups: &GroupStructure,
    spec: &PenaltySpec,
    config: &SolverConfig,
    warm_start: Option<&DVector<f64>>,
) -> Result<FitResult> {
    Problem::new(loss, data, groups)?.solve(spec, config, warm_start)
}
