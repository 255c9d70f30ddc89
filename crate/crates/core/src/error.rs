use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("group partition is empty")]
    EmptyPartition,
    #[error("group {group} has invalid size {size}; sizes must be at least 1")]
    InvalidSize { group: usize, size: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("non-finite value in {0}")]
    NonFiniteData(&'static str),
    #[error("problem too large: d = {d} exceeds the dense Hessian limit {limit}")]
    ProblemTooLarge { d: usize, limit: usize },
    #[error("Hessian restricted to the active set is numerically singular (rcond = {rcond:e})")]
    SingularHessian { rcond: f64 },
    #[error("adaptive weight for coordinate {index} is degenerate: shifted first-step value {value:e}")]
    DegenerateWeight { index: usize, value: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("ill-posed problem: {0}")]
    IllPosed(String),
    #[error("maximum number of iterations ({0}) reached")]
    MaxIterations(usize),
    #[error("objective is not finite")]
    NonFiniteObjective,
    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),
    #[error("only {found} exact-recovery replications, at least {required} needed")]
    InsufficientRecoveries { found: usize, required: usize },
    #[error("csv input: {0}")]
    Csv(String),
}

impl Error {
    /// Short machine-readable tag, used in JSON outputs.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyPartition => "EmptyPartition",
            Error::InvalidSize { .. } => "InvalidSize",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidResponse(_) => "InvalidResponse",
            Error::NonFiniteData(_) => "NonFiniteData",
            Error::ProblemTooLarge { .. } => "ProblemTooLarge",
            Error::SingularHessian { .. } => "SingularHessian",
            Error::DegenerateWeight { .. } => "DegenerateWeight",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::IllPosed(_) => "IllPosed",
            Error::MaxIterations(_) => "MaxIterations",
            Error::NonFiniteObjective => "NonFiniteObjective",
            Error::InfeasibleScenario(_) => "InfeasibleScenario",
            Error::InsufficientRecoveries { .. } => "InsufficientRecoveries",
            Error::Csv(_) => "Csv",
        }
    }

    /// True for failures of the numerical procedure itself, as opposed to
    /// malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularHessian { .. }
                | Error::DegenerateWeight { .. }
                | Error::IllPosed(_)
                | Error::MaxIterations(_)
                | Error::NonFiniteObjective
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
