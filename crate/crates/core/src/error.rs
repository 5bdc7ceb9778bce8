use thiserror::Error;

/// Errors raised by the chain, spectral and estimation routines.
///
/// Every variant maps to a stable machine-readable code (see [`MixError::code`])
/// which the command-line front end reports verbatim.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MixError {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("chain is reducible: support graph is not strongly connected")]
    Reducible,

    #[error("chain did not mix within {cap} steps")]
    NotMixedByCap { cap: usize },

    #[error("gap loop did not certify a positive value within {cap} powers")]
    NonConvergent { cap: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("Lanczos iteration did not converge: residual {residual:e} after {iterations} steps")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("trajectory too short: {len} states, need at least {needed}")]
    TrajectoryTooShort { len: usize, needed: usize },

    #[error("states never visited in the skipped chain: {states:?}")]
    UnvisitedState { states: Vec<usize> },

    #[error("no skip rate up to {max_k} produced a usable estimate")]
    NoUsableK { max_k: usize },

    #[error("amplified scan exhausted the trajectory before the threshold fired")]
    NoTrigger,

    #[error("empirical pseudo-spectral gap is numerically zero ({gap:e})")]
    DegenerateEmpiricalGap { gap: f64 },

    #[error("parse error: {0}")]
    Parse(String),
}

impl MixError {
    pub fn code(&self) -> &'static str {
        match self {
            MixError::InvalidMatrix(_) => "INVALID_MATRIX",
            MixError::InvalidArgument(_) => "INVALID_ARGUMENT",
            MixError::Reducible => "REDUCIBLE",
            MixError::NotMixedByCap { .. } => "NOT_MIXED_BY_CAP",
            MixError::NonConvergent { .. } => "NONCONVERGENT",
            MixError::NotSymmetric { .. } => "NOT_SYMMETRIC",
            MixError::NoConvergence { .. } => "NO_CONVERGENCE",
            MixError::TrajectoryTooShort { .. } => "TRAJECTORY_TOO_SHORT",
            MixError::UnvisitedState { .. } => "UNVISITED_STATE",
            MixError::NoUsableK { .. } => "NO_USABLE_K",
            MixError::NoTrigger => "NO_TRIGGER",
            MixError::DegenerateEmpiricalGap { .. } => "DEGENERATE_EMPIRICAL_GAP",
            MixError::Parse(_) => "PARSE_ERROR",
        }
    }

    /// Parse failures are input problems; everything else is a domain outcome.
    pub fn is_parse(&self) -> bool {
        matches!(self, MixError::Parse(_))
    }
}

pub type Result<T> = std::result::Result<T, MixError>;
