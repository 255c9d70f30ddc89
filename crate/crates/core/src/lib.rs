//! Sparse-group LASSO and adaptive sparse-group LASSO for smooth convex
//! empirical criteria.
//!
//! * [`groups`]: group partitions and active-set bookkeeping
//! * [`loss`]: squared and logistic losses behind the [`loss::Loss`] contract
//! * [`penalty`]: penalty functionals, adaptive weights, rate conditions
//! * [`solver`]: block coordinate descent and the KKT certificate
//! * [`pipeline`]: first-step estimate, cross-validation, final fit
//! * [`sim`]: simulation design and Monte Carlo harness

pub mod error;
pub mod groups;
pub mod loss;
pub mod penalty;
pub mod pipeline;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
pub use groups::{compare_supports, ActiveSets, GroupStructure, SupportComparison};
pub use loss::{sandwich_covariance, Dataset, Loss, LossFamily};
pub use penalty::{
    adaptive_weights, check_rate_feasibility, penalty_value, tuning_from_rates, AdaptiveConfig, FeasibilityReport,
    PenaltySpec,
};
pub use pipeline::{first_step_estimator, fit_estimator, EstimatorKind, PipelineConfig, Tuning};
pub use solver::{kkt_verify, soft_threshold, solve, FitResult, KktReport, Problem, SolverConfig, StepRule};

/// Serializes a `DVector<f64>` as a plain JSON array.
pub(crate) mod dvec_serde {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}
