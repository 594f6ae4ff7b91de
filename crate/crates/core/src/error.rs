use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter {theta:?} is outside the open domain of {family} (margin {margin:e})")]
    DomainViolation {
        family: String,
        theta: Vec<f64>,
        margin: f64,
    },

    #[error("support mismatch: expected {expected} outcomes, got {actual}")]
    SupportMismatch { expected: usize, actual: usize },

    /// `cell` names the experiment grid cell, when there is one.
    #[error("enumeration of {outcomes} outcomes exceeds the budget of {budget}{cell}")]
    BudgetExceeded {
        outcomes: u128,
        budget: u64,
        cell: String,
    },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("alpha = 0 has no density power form; use the Kullback-Leibler path")]
    AlphaZero,

    #[error("alpha = {0} is excluded (alpha must be > -1)")]
    AlphaExcluded(f64),

    #[error("alpha mismatch: {0} vs {1}")]
    AlphaMismatch(f64, f64),

    #[error("finite-difference step {step:e} reaches outside the domain (boundary distance {distance:e})")]
    StepTooLarge { step: f64, distance: f64 },

    #[error("matrix is ill-conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("data set is empty")]
    EmptyData,

    #[error("optimizer failed to converge: {0}")]
    NonConvergence(String),

    #[error("estimator is biased (bias norm {bias_norm:e})")]
    BiasedEstimator { bias_norm: f64 },

    #[error("invalid probability vector: {0}")]
    InvalidPmf(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DomainViolation { .. } => "DomainViolation",
            Error::SupportMismatch { .. } => "SupportMismatch",
            Error::BudgetExceeded { .. } => "BudgetExceeded",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::AlphaZero => "AlphaZero",
            Error::AlphaExcluded(_) => "AlphaExcluded",
            Error::AlphaMismatch(..) => "AlphaMismatch",
            Error::StepTooLarge { .. } => "StepTooLarge",
            Error::IllConditioned { .. } => "IllConditioned",
            Error::EmptyData => "EmptyData",
            Error::NonConvergence(_) => "NonConvergence",
            Error::BiasedEstimator { .. } => "BiasedEstimator",
            Error::InvalidPmf(_) => "InvalidPmf",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Parse { .. } => "ParseError",
            Error::Validation(_) => "ValidationError",
            Error::Io(_) => "IoError",
        }
    }

    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_computational(&self) -> bool {
        matches!(
            self,
            Error::IllConditioned { .. }
                | Error::BudgetExceeded { .. }
                | Error::NonConvergence(_)
                | Error::BiasedEstimator { .. }
                | Error::StepTooLarge { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Rejects alpha <= -1.
pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() || alpha <= -1.0 {
        return Err(Error::AlphaExcluded(alpha));
    }
    Ok(())
}
