//! Error type shared by the numerical modules.

/// Errors produced by the library.
///
/// Two broad classes exist: *invalid parameter* errors, raised when an
/// argument violates a documented precondition (wrong range, inconsistent
/// sizes, a hypothesis of a limit theorem not satisfied), and *numerical*
/// errors, raised when an algorithm fails at runtime (a covariance matrix
/// that is not positive semi-definite even after regularisation, a
/// quadrature that does not converge).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violates a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An index is outside the valid range for the operation.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// A numerical algorithm failed to produce a trustworthy result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Input data could not be parsed or is structurally inconsistent.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A time-stepping scheme produced a non-finite state (stiff blow-up or
    /// overflow). Carries the index of the step at which divergence was
    /// detected.
    #[error("simulation diverged at time step {step}: state became non-finite")]
    SimulationDiverged {
        /// Zero-based index of the diverging step.
        step: usize,
    },
}

/// Convenient result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Build an [`Error::InvalidParameter`] from anything displayable.
    pub fn invalid(msg: impl std::fmt::Display) -> Self {
        Error::InvalidParameter(msg.to_string())
    }

    /// Build an [`Error::Numerical`] from anything displayable.
    pub fn numerical(msg: impl std::fmt::Display) -> Self {
        Error::Numerical(msg.to_string())
    }
}
