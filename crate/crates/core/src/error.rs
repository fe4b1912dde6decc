use thiserror::Error;

/// Errors raised by the numerical layers and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate start: drive frequency at t = {t} is zero")]
    DegenerateStart { t: f64 },

    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    #[error("internal consistency violated: {0}")]
    Inconsistent(String),

    #[error("degenerate oscillator state: {0}")]
    DegenerateState(String),

    #[error("pole of the connection coefficients at p = {p}")]
    Pole { p: f64 },

    #[error("singular point: {0}")]
    Singular(String),

    #[error("distribution truncated at m = {m_max} with attained mass {mass}")]
    Truncation { m_max: usize, mass: f64 },

    #[error("evaluation at the critical point h = 1")]
    CriticalPoint,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the CLI: 2 for input errors, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::DegenerateStart { .. }
            | Error::Pole { .. }
            | Error::Singular(_)
            | Error::CriticalPoint
            | Error::Unsupported(_)
            | Error::Config(_)
            | Error::Io(_) => 2,
            Error::IntegrationFailure { .. }
            | Error::Inconsistent(_)
            | Error::DegenerateState(_)
            | Error::Truncation { .. }
            | Error::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
