use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("bad member index {0}")]
    BadIndex(usize),

    #[error("invalid problem: {}", .0.join("; "))]
    InvalidProblem(Vec<String>),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("strategy reads unavailable information: {0}")]
    InfoViolation(String),

    #[error("nothing to do: {0}")]
    NothingToDo(String),

    #[error("bad certificate: {0}")]
    BadCertificate(String),

    #[error("invariance broken: {0}")]
    InvarianceBroken(String),

    #[error("singular innovation covariance at t={0}")]
    SingularInnovation(usize),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_)
            | Error::Io(_)
            | Error::InvalidMatrix(_)
            | Error::DimensionMismatch(_)
            | Error::InvalidCovariance(_)
            | Error::InvalidProblem(_)
            | Error::BadIndex(_) => 2,
            Error::AssumptionViolated(_) | Error::SingularInnovation(_) => 3,
            Error::InvarianceBroken(_) => 4,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
