use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter box: {0}")]
    InvalidBox(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("barrier relative degree {found} does not match the required degree {required}")]
    RelativeDegree { required: u8, found: u8 },

    #[error("high-order barrier precondition violated: {0}")]
    HighOrderPrecondition(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("controller QP {status} (most violated robust constraint #{most_violated})")]
    ControllerInfeasible {
        status: String,
        most_violated: usize,
    },

    #[error(
        "set-membership identification conflict: epsilon = {epsilon} is too small for history entries {entries:?}"
    )]
    IdentificationConflict { epsilon: f64, entries: Vec<usize> },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            actual,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
