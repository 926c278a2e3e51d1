use std::fmt;

/// Library-wide error type.
///
/// The variants map onto the CLI exit codes: validation problems (bad
/// arguments, malformed files) exit with 2, numerical failures with 3 and
/// I/O problems with 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid argument or domain violation (e.g. `phi <= 0`, negative time).
    #[error("invalid input: {0}")]
    Invalid(String),
    /// Malformed input file; carries the 1-based line number when known.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// No events in the data, so the requested quantity carries no information.
    #[error("no events in snapshot: {0}")]
    NoEvents(String),
    /// A matrix required for the computation is singular or not positive definite.
    #[error("singular information matrix: {0}")]
    Singular(String),
    /// A fit did not converge and the requested quantity needs a converged fit.
    #[error("fit did not converge: {0}")]
    NotConverged(String),
    /// Non-finite value encountered while evaluating a likelihood or derivative.
    #[error("numerical evaluation failed: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl fmt::Display) -> Self {
        Error::Invalid(msg.to_string())
    }

    /// Exit code category used by the CLI: 2 validation, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) | Error::Parse { .. } => 2,
            Error::NoEvents(_)
            | Error::Singular(_)
            | Error::NotConverged(_)
            | Error::Numerical(_) => 3,
            Error::Io(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
