use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {axis} grid: {reason}")]
    InvalidGrid { axis: &'static str, reason: String },

    #[error("{what} has length {found}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown phantom kind `{0}`")]
    UnknownPhantom(String),

    #[error("index {index} out of range for a field of {len} entries")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("starting point violates the lower bound at index {index} ({value} < {bound})")]
    Infeasible { index: usize, value: f64, bound: f64 },

    #[error("objective became non-finite")]
    NonFiniteObjective,

    #[error("flat distribution: every squared curvature term vanishes")]
    DegenerateField,

    #[error("singular system: {0}")]
    Singular(&'static str),

    #[error("outer iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Format(#[from] crate::io::FormatError),
}
