//! Sparse-group penalties, adaptive weights and the rate-exponent
//! feasibility system.
//!
//! The penalty on `θ` is
//!
//! ```text
//! (λ/T) Σ_j α_j |θ_j|  +  (γ/T) Σ_l ξ_l ‖θ^(l)‖₂
//! ```
//!
//! with per-coefficient weights `α` and per-group weights `ξ`. Constant
//! weights give the plain sparse-group LASSO; weights built from a
//! first-step estimate give the adaptive version.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::groups::GroupStructure;

/// Tuning pair and weights of the sparse-group penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub lambda: f64,
    pub gamma: f64,
    pub alpha_weights: Vec<f64>,
    pub xi_weights: Vec<f64>,
}

impl PenaltySpec {
    /// Unit weights everywhere.
    pub fn unweighted(lambda: f64, gamma: f64, groups: &GroupStructure) -> Self {
        Self {
            lambda,
            gamma,
            alpha_weights: vec![1.0; groups.dim()],
            xi_weights: vec![1.0; groups.n_groups()],
        }
    }

    pub fn with_weights(lambda: f64, gamma: f64, alpha_weights: Vec<f64>, xi_weights: Vec<f64>) -> Self {
        Self {
            lambda,
            gamma,
            alpha_weights,
            xi_weights,
        }
    }

    /// Same weights, different tuning pair.
    pub fn with_tuning(&self, lambda: f64, gamma: f64) -> Self {
        Self {
            lambda,
            gamma,
            ..self.clone()
        }
    }

    pub fn validate(&self, groups: &GroupStructure) -> Result<()> {
        check_len(groups.dim(), self.alpha_weights.len())?;
        check_len(groups.n_groups(), self.xi_weights.len())?;
        for (name, v) in [("lambda", self.lambda), ("gamma", self.gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        let bad = |w: &f64| !(w.is_finite() && *w >= 0.0);
        if self.alpha_weights.iter().any(bad) || self.xi_weights.iter().any(bad) {
            return Err(Error::InvalidConfig("penalty weights must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Per-coefficient soft-threshold levels `λ α_j / T`.
    pub fn l1_levels(&self, n_obs: usize) -> Vec<f64> {
        let scale = self.lambda / n_obs as f64;
        self.alpha_weights.iter().map(|a| scale * a).collect()
    }

    /// Per-group levels `γ ξ_l / T`.
    pub fn group_levels(&self, n_obs: usize) -> Vec<f64> {
        let scale = self.gamma / n_obs as f64;
        self.xi_weights.iter().map(|x| scale * x).collect()
    }

    /// True when both penalty terms vanish identically.
    pub fn is_zero(&self) -> bool {
        let l1_off = self.lambda == 0.0 || self.alpha_weights.iter().all(|&a| a == 0.0);
        let grp_off = self.gamma == 0.0 || self.xi_weights.iter().all(|&x| x == 0.0);
        l1_off && grp_off
    }
}

pub fn penalty_value(theta: &DVector<f64>, groups: &GroupStructure, spec: &PenaltySpec, n_obs: usize) -> Result<f64> {
    check_len(groups.dim(), theta.len())?;
    check_len(groups.dim(), spec.alpha_weights.len())?;
    check_len(groups.n_groups(), spec.xi_weights.len())?;
    let t = n_obs.max(1) as f64;
    let l1: f64 = theta.iter().zip(&spec.alpha_weights).map(|(th, a)| a * th.abs()).sum();
    let group: f64 = (0..groups.n_groups())
        .map(|k| spec.xi_weights[k] * groups.block_norm(theta, k))
        .sum();
    Ok(spec.lambda / t * l1 + spec.gamma / t * group)
}

/// Exponents of the adaptive weights and of the tuning/dimension rates.
///
/// `λ_T = T^beta_rate`, `γ_T = T^alpha_rate`, shift `e_T = T^{-kappa}` and
/// dimension growth `d_T = O(T^c_growth)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub eta: f64,
    pub mu: f64,
    pub kappa: f64,
    pub beta_rate: f64,
    pub alpha_rate: f64,
    pub c_growth: f64,
}

impl Default for AdaptiveConfig {
    /// The simulation-study calibration: κ = 0.2, η = 3.5, μ = 2.5,
    /// α = β = 1/8, c = 1/6.
    fn default() -> Self {
        Self {
            eta: 3.5,
            mu: 2.5,
            kappa: 0.2,
            beta_rate: 0.125,
            alpha_rate: 0.125,
            c_growth: 1.0 / 6.0,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta", self.eta), ("mu", self.mu), ("kappa", self.kappa)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [("beta_rate", self.beta_rate), ("alpha_rate", self.alpha_rate)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.c_growth) {
            return Err(Error::InvalidConfig(format!(
                "c_growth must lie in [0, 1), got {}",
                self.c_growth
            )));
        }
        Ok(())
    }

    /// Shift `e_T = T^{-κ}` added to the first-step estimate.
    pub fn shift(&self, n_obs: usize) -> f64 {
        (n_obs as f64).powf(-self.kappa)
    }
}

/// Shifted first-step values below this magnitude are rejected.
pub const DEGENERATE_WEIGHT_FLOOR: f64 = 1e-12;

/// Adaptive weights from a first-step estimate `θ̃`.
///
/// With `θ̃̃ = θ̃ + T^{-κ}` (the shift is added to every coordinate),
/// `α_j = |θ̃̃_j|^{-η}` and `ξ_l = ‖θ̃̃^(l)‖₂^{-μ}`.
pub fn adaptive_weights(
    first_step: &DVector<f64>,
    groups: &GroupStructure,
    config: &AdaptiveConfig,
    n_obs: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(groups.dim(), first_step.len())?;
    config.validate()?;
    if n_obs < 2 {
        return Err(Error::InvalidConfig(format!(
            "adaptive weights need T >= 2, got {n_obs}"
        )));
    }
    let shift = config.shift(n_obs);
    let shifted = first_step.add_scalar(shift);
    if let Some((index, &value)) = shifted
        .iter()
        .enumerate()
        .find(|(_, v)| v.abs() < DEGENERATE_WEIGHT_FLOOR)
    {
        return Err(Error::DegenerateWeight { index, value });
    }
    let alpha = shifted.iter().map(|v| v.abs().powf(-config.eta)).collect();
    let xi = (0..groups.n_groups())
        .map(|k| groups.block_norm(&shifted, k).powf(-config.mu))
        .collect();
    Ok((alpha, xi))
}

/// `(λ_T, γ_T) = (T^β, T^α)`.
pub fn tuning_from_rates(config: &AdaptiveConfig, n_obs: usize) -> (f64, f64) {
    let t = n_obs as f64;
    (t.powf(config.beta_rate), t.powf(config.alpha_rate))
}

/// One inequality of the rate system. `slack > 0` iff the strict inequality
/// holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCondition {
    pub label: String,
    pub expression: String,
    pub holds: bool,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub config: AdaptiveConfig,
    pub conditions: Vec<RateCondition>,
    pub feasible: bool,
}

/// Evaluates the five rate conditions linking `(α, β, c, κ, η, μ)`:
///
/// ```text
/// (i)   α + c/2 + κμ − 1/2 < 0
/// (ii)  α − 1/2 + [(1+μ)(1−c) − 1]/2 > 0
/// (iii) β + κη − 1/2 < 0
/// (iv)  β − 1/2 + [(1+η)(1−c) − 1]/2 > 0
/// (v)   (1+μ)[1 − c/2 − κη − β] + α − 1 > 0
/// ```
///
/// Inequalities are strict with zero tolerance.
pub fn check_rate_feasibility(config: &AdaptiveConfig) -> FeasibilityReport {
    let AdaptiveConfig {
        eta,
        mu,
        kappa,
        beta_rate: beta,
        alpha_rate: alpha,
        c_growth: c,
    } = *config;
    // (label, expression, lhs, lhs must be negative)
    let raw = [
        (
            "i",
            "alpha + c/2 + kappa*mu - 1/2 < 0",
            alpha + c / 2.0 + kappa * mu - 0.5,
            true,
        ),
        (
            "ii",
            "alpha - 1/2 + ((1+mu)(1-c) - 1)/2 > 0",
            alpha - 0.5 + ((1.0 + mu) * (1.0 - c) - 1.0) / 2.0,
            false,
        ),
        ("iii", "beta + kappa*eta - 1/2 < 0", beta + kappa * eta - 0.5, true),
        (
            "iv",
            "beta - 1/2 + ((1+eta)(1-c) - 1)/2 > 0",
            beta - 0.5 + ((1.0 + eta) * (1.0 - c) - 1.0) / 2.0,
            false,
        ),
        (
            "v",
            "(1+mu)(1 - c/2 - kappa*eta - beta) + alpha - 1 > 0",
            (1.0 + mu) * (1.0 - c / 2.0 - kappa * eta - beta) + alpha - 1.0,
            false,
        ),
    ];
    let conditions: Vec<RateCondition> = raw
        .iter()
        .map(|&(label, expression, lhs, negative)| {
            let slack = if negative { -lhs } else { lhs };
            RateCondition {
                label: label.to_string(),
                expression: expression.to_string(),
                holds: slack > 0.0,
                slack,
            }
        })
        .collect();
    FeasibilityReport {
        config: *config,
        feasible: conditions.iter().all(|c| c.holds),
        conditions,
    }
}
