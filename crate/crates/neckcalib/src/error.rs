use thiserror::Error;

/// Errors surfaced by the library.
///
/// The CLI maps these onto exit codes: configuration and argument problems
/// exit 1, numerical degeneracies exit 2. Comass violations and negative
/// volume excess are findings carried in reports, never errors.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument breaks a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A point lies outside the declared domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Supplied data violated its declared contract mid-run
    /// (non-SPD fiber metric, non-finite profile value).
    #[error("spec violation: {0}")]
    SpecViolation(String),

    /// A computation degenerated beyond the documented tolerances.
    #[error("numerical degeneracy: {0}")]
    Degeneracy(String),

    /// An operation was called before required state was established.
    #[error("state error: {0}")]
    State(String),

    /// Random sampling failed persistently; signals a broken spec.
    #[error("sampling error: {0}")]
    Sampling(String),

    /// The run configuration could not be parsed or validated.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
