use hillkit_core::Error;
use std::fmt;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_NO_CONVERGENCE: u8 = 2;
pub const EXIT_THEOREM_VIOLATION: u8 = 3;
pub const EXIT_NOT_STABILIZED: u8 = 4;
pub const EXIT_CONFIG: u8 = 5;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Core(Error),
    /// Checks that exceeded their tolerance.
    Checks(Vec<String>),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_FAILURE,
            CliError::Checks(_) => EXIT_THEOREM_VIOLATION,
            CliError::Core(e) => match e {
                Error::NoConvergence { .. } | Error::SingularJacobian { .. } => EXIT_NO_CONVERGENCE,
                Error::TheoremViolation(_) => EXIT_THEOREM_VIOLATION,
                Error::NotStabilized(_) => EXIT_NOT_STABILIZED,
                Error::InvalidInput(_) | Error::SymmetryViolation(_) | Error::InvalidDegree(_) => EXIT_CONFIG,
                _ => EXIT_FAILURE,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Checks(names) => write!(f, "checks exceeded their tolerance: {}", names.join("; ")),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}
