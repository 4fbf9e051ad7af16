use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate squeezing (r = 0): use a coherent-state drive instead")]
    DegenerateSqueezing,

    #[error("zero-duration pulse: {0}")]
    ZeroDuration(String),

    #[error(
        "Fock band too small: truncation mass {mass:.3e} exceeds {threshold:.3e}; \
         widen n_max to at least {required_n_max}"
    )]
    BandTooSmall {
        mass: f64,
        threshold: f64,
        required_n_max: u64,
    },

    #[error("band/state mismatch: {0}")]
    Construction(String),

    #[error(
        "alpha quadrature insufficient: resolution-of-identity error {error:.3e} \
         (tolerance {tolerance:.1e}) worst at (m, n) = ({m}, {n})"
    )]
    QuadratureInsufficient {
        m: u64,
        n: u64,
        error: f64,
        tolerance: f64,
    },

    #[error("eigen-solver did not converge: {0}")]
    EigenSolver(String),

    #[error(
        "Fock band overflow at step {step}: edge occupation {occupation:.3e} exceeds {threshold:.3e}; \
         widen the band to n_min <= {suggested_n_min}, n_max >= {suggested_n_max}"
    )]
    BandOverflow {
        step: usize,
        occupation: f64,
        threshold: f64,
        suggested_n_min: u64,
        suggested_n_max: u64,
    },

    #[error("numerical blow-up (non-finite amplitude) at step {step}")]
    NumericalBlowup { step: usize },

    #[error("ensemble failed for {} node(s) {failed:?}: {first}", failed.len())]
    EnsembleFailed { failed: Vec<usize>, first: String },

    #[error("coherent sum needs every quadrature node; {missing} node(s) missing")]
    CoherentSumIncomplete { missing: usize },

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("container format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 2 configuration, 3 numerical convergence, 4 IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::DegenerateSqueezing
            | Error::ZeroDuration(_)
            | Error::Construction(_)
            | Error::Comparison(_)
            | Error::Config(_) => 2,
            Error::BandTooSmall { .. }
            | Error::QuadratureInsufficient { .. }
            | Error::EigenSolver(_)
            | Error::BandOverflow { .. }
            | Error::NumericalBlowup { .. }
            | Error::EnsembleFailed { .. }
            | Error::CoherentSumIncomplete { .. } => 3,
            Error::Format(_) | Error::Io(_) => 4,
        }
    }

    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::DegenerateSqueezing => "degenerate-squeezing",
            Error::ZeroDuration(_) => "zero-duration",
            Error::BandTooSmall { .. } => "band-too-small",
            Error::Construction(_) => "construction",
            Error::QuadratureInsufficient { .. } => "quadrature-insufficient",
            Error::EigenSolver(_) => "eigen-solver",
            Error::BandOverflow { .. } => "band-overflow",
            Error::NumericalBlowup { .. } => "numerical-blowup",
            Error::EnsembleFailed { .. } => "ensemble-failed",
            Error::CoherentSumIncomplete { .. } => "coherent-sum-incomplete",
            Error::Comparison(_) => "comparison",
            Error::Config(_) => "config",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
