use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("coverage target {target} for cluster {cluster} exceeds cluster size {size}")]
    TargetExceedsCluster {
        cluster: usize,
        target: usize,
        size: usize,
    },

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("degenerate instance: no object-tag associations (|E| = 0)")]
    DegenerateInstance,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bit vector has length {found}, model has {expected} variables")]
    LengthMismatch { expected: usize, found: usize },

    #[error("model has {n_vars} variables, exhaustive search limit is {limit}")]
    SizeLimit { n_vars: usize, limit: usize },

    #[error(
        "enumeration needs {required} assignments, budget is {budget}; \
         raise TMCD_ENUM_BUDGET or use `solve` instead"
    )]
    BudgetExceeded { required: String, budget: u64 },

    #[error("balance ratio undefined for tag {0}: it has no associations")]
    UndefinedBalanceRatio(String),

    #[error("no selected tag with positive degree")]
    EmptySelection,

    #[error("unknown tag `{0}`")]
    UnknownTag(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
