use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("experiment contains no outcomes")]
    EmptyExperiment,
    #[error("campaign contains no experiments")]
    EmptyCampaign,
    #[error("tables were derived from different matrices or filters")]
    ProvenanceMismatch,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate index: {0}")]
    DegenerateIndex(&'static str),
    #[error("enumeration of {size} sample points exceeds the limit of {limit}")]
    TooLarge { size: u128, limit: u64 },
    #[error("no sign change of the deficit between {lo} and {hi} degrees")]
    Bracket { lo: f64, hi: f64 },
    #[error("no decision plan with N <= {n_max}")]
    NoPlanWithinBudget { n_max: u64 },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("session conflict: {0}")]
    Conflict(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("cancelled")]
    Cancelled,
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
