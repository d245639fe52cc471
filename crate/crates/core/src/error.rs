use thiserror::Error;

/// Errors raised anywhere in the identification pipeline.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Leading coefficient of a characteristic polynomial is zero.
    #[error("degenerate order: leading coefficient is zero")]
    DegenerateOrder,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("value {value} is outside the admissible interval [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("unstable linear parameters A={a}, B={b}, C={c}")]
    Unstable { a: f64, b: f64, c: f64 },

    /// Raw least-squares fit that failed the stability check; coefficients
    /// ordered from highest derivative down to the static gain.
    #[error("frequency fit produced unstable parameters {raw:?}")]
    UnstableFit { raw: Vec<f64> },

    #[error("simulation diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("analysis window error: {0}")]
    Window(String),

    #[error("degenerate input: |K1(u)| = {magnitude:e}")]
    DegenerateInput { magnitude: f64 },

    #[error("transfer function singular at omega = {omega}")]
    Singularity { omega: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(
        "optimizer did not converge after {iterations} iterations (best objective {objective:e})"
    )]
    NonConvergence {
        iterations: usize,
        objective: f64,
        best: Vec<f64>,
    },

    #[error("objective is not finite at {point:?}")]
    NonFiniteObjective { point: Vec<f64> },

    /// A DSS step increased the residual by more than the allowed margin.
    #[error("DSS step rejected: residual rose from {previous:e} to {rejected:e}")]
    Stagnation {
        previous: f64,
        rejected: f64,
        previous_state: Box<crate::dss::DssState>,
        rejected_state: Box<crate::dss::DssState>,
    },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("at omega = {omega}: {source}")]
    AtFrequency {
        omega: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad inputs rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidParameter { .. }
            | Error::GridMismatch(_)
            | Error::Window(_)
            | Error::InsufficientData(_)
            | Error::Configuration(_)
            | Error::OutOfRange { .. } => true,
            Error::AtFrequency { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
