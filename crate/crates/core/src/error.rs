use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Solver,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("column `{column}` row {row}: value {value} is not a 0/1 indicator")]
    NonBinaryIndicator { column: String, row: usize, value: String },
    #[error("no units with attribute s={group} and treatment d={arm}")]
    EmptyCell { group: u8, arm: u8 },
    #[error("column `{column}` row {row}: non-finite value")]
    NonFiniteValue { column: String, row: usize },
    #[error("cell (s={group}, d={arm}) has {size} units, fewer than the {folds} folds requested")]
    InfeasibleStratification { group: u8, arm: u8, size: usize, folds: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular normal equations (rank-deficient design without ridge)")]
    SingularSystem,
    #[error("logistic fit did not converge: gradient norm {grad_norm:.3e}")]
    NonConvergence { grad_norm: f64 },
    #[error("no treated units in attribute group s={0}")]
    ZeroTreatedGroup(u8),
    #[error("predictive parity requires a deterministic (0/1) policy")]
    NonDeterministicPolicy,
    #[error("measure `{0}` is not linear in the policy and cannot be optimized")]
    NonLinearObjective(String),
    #[error("policy class requires a finite coefficient box (b_max)")]
    UnboundedBox,
    #[error("invalid policy class: {0}")]
    InvalidPolicyClass(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("solver failed at every gridpoint")]
    AllGridpointsFailed,
    #[error("no policy in the class satisfies the fairness constraint")]
    InfeasibleFairnessConstraint,
    #[error("solver: {0}")]
    Solver(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("{failed} of {total} replications failed")]
    TooManyFailures { failed: usize, total: usize },
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::InvalidPolicyClass(_) | Error::UnboundedBox | Error::NonLinearObjective(_) => {
                ErrorCategory::Config
            }
            Error::MissingColumn(_)
            | Error::NonBinaryIndicator { .. }
            | Error::EmptyCell { .. }
            | Error::NonFiniteValue { .. }
            | Error::InfeasibleStratification { .. }
            | Error::DimensionMismatch(_)
            | Error::SingularSystem
            | Error::NonConvergence { .. }
            | Error::ZeroTreatedGroup(_)
            | Error::NonDeterministicPolicy
            | Error::InvariantViolation(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorCategory::Data,
            Error::InvalidModel(_)
            | Error::AllGridpointsFailed
            | Error::InfeasibleFairnessConstraint
            | Error::Solver(_)
            | Error::TooManyFailures { .. } => ErrorCategory::Solver,
        }
    }
}
