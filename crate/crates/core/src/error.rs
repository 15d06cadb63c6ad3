use thiserror::Error;

pub type Result<T> = std::result::Result<T, NisimError>;

#[derive(Debug, Error)]
pub enum NisimError {
    #[error("quadrature requested in dimension {n}, maximum is {max}")]
    DimensionTooLarge { n: usize, max: usize },

    #[error("invalid sample count {0} (need at least {1})")]
    InvalidSamples(usize, usize),

    #[error("degree {requested} exceeds the expansion's max degree {max}")]
    DegreeExceeded { requested: u32, max: u32 },

    #[error("noise time must be non-negative, got {0}")]
    NegativeTime(f64),

    #[error("non-finite input coordinate")]
    NonFiniteInput,

    #[error("polynomial has zero variance")]
    ZeroVariance,

    #[error("precondition violated: {what} (measured {measured}, bound {bound})")]
    PreconditionViolated { what: String, measured: f64, bound: f64 },

    #[error("function is not simplex-valued at {violations} of {checked} sampled points")]
    NotSimplexValued { violations: usize, checked: usize },

    #[error("basis is not orthonormal: max Gram deviation {max_dev:.3e} exceeds tolerance {tol:.3e}")]
    NonOrthonormalBasis { max_dev: f64, tol: f64 },

    #[error("boosting did not stop within {budget} iterations")]
    BudgetExceeded { budget: usize },

    #[error("point {value} lies outside the unit box")]
    OutOfBox { value: f64 },

    #[error("correlation {0} is outside [-1, 1]")]
    InvalidRho(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("agreement is not monotone along the interval family (step {step})")]
    Nonmonotone { step: usize },

    #[error("smoothing report violates {} bound(s)", .0.report.violations.len())]
    ReportViolation(Box<crate::pipeline::SmoothOutput>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NisimError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        NisimError::InvalidInput(msg.into())
    }

    /// Stable upper-case code used in machine-readable diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            NisimError::DimensionTooLarge { .. } => "DIMENSION_TOO_LARGE",
            NisimError::InvalidSamples(..) => "INVALID_SAMPLES",
            NisimError::DegreeExceeded { .. } => "DEGREE_EXCEEDED",
            NisimError::NegativeTime(_) => "NEGATIVE_TIME",
            NisimError::NonFiniteInput => "NON_FINITE_INPUT",
            NisimError::ZeroVariance => "ZERO_VARIANCE",
            NisimError::PreconditionViolated { .. } => "PRECONDITION_VIOLATED",
            NisimError::NotSimplexValued { .. } => "NOT_SIMPLEX_VALUED",
            NisimError::NonOrthonormalBasis { .. } => "NON_ORTHONORMAL_BASIS",
            NisimError::BudgetExceeded { .. } => "BUDGET_EXCEEDED",
            NisimError::OutOfBox { .. } => "OUT_OF_BOX",
            NisimError::InvalidRho(_) => "INVALID_RHO",
            NisimError::InvalidInput(_) => "INVALID_INPUT",
            NisimError::DimMismatch(_) => "DIM_MISMATCH",
            NisimError::Nonmonotone { .. } => "NONMONOTONE",
            NisimError::ReportViolation(_) => "REPORT_VIOLATION",
            NisimError::Io(_) => "IO",
            NisimError::Json(_) => "PARSE",
        }
    }
}
