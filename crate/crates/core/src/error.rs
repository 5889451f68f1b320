use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QwalkError {
    #[error("Kraus list is empty")]
    EmptyKrausSet,

    #[error("matrix is not Hermitian (max |A - A*| = {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("eigenvalue iteration did not converge (residual {residual:.3e})")]
    NoConvergence { residual: f64 },

    #[error("coin pair is not trace preserving (max |L*L + R*R - I| = {deviation:.3e})")]
    NotTracePreserving { deviation: f64 },

    #[error("L + R is not unitary (max |U*U - I| = {deviation:.3e}); no unitary walk exists for this pair")]
    CoinNotUnitarySum { deviation: f64 },

    #[error("both step probabilities vanished at step {step}; trajectory is numerically dead")]
    DegenerateStep { step: usize },

    #[error("path enumeration of length {steps} exceeds the cost guard of {limit} steps")]
    CostGuardExceeded { steps: usize, limit: usize },

    #[error("return probability {value} at step {step} lies outside [0, 1]")]
    TermOutOfRange { step: usize, value: f64 },

    #[error("quadrature with {nodes} nodes aliases a degree-{degree} integrand; need more than {degree} nodes")]
    NodesTooFew { nodes: usize, degree: usize },

    #[error("divergence diagnostic needs at least {needed} nonzero terms, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("column {column} of the site walk is not normalized (max |sum B*B - I| = {deviation:.3e})")]
    ColumnNotNormalized { column: usize, deviation: f64 },

    #[error("stationary iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("stationary state is not unique (eigenvalue 1 has multiplicity {multiplicity})")]
    NonUnique { multiplicity: usize },

    #[error("un-returned mass {tail_mass:.3e} exceeds {limit:.1e}; walk is not numerically positive recurrent at this horizon")]
    TailTooLarge { tail_mass: f64, limit: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl QwalkError {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            QwalkError::NoConvergence { .. }
            | QwalkError::NotConverged { .. }
            | QwalkError::TailTooLarge { .. }
            | QwalkError::DegenerateStep { .. } => 3,
            QwalkError::CostGuardExceeded { .. } => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, QwalkError>;
