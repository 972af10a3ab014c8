use std::io;

/// Errors raised anywhere in the forecasting pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("line {line}: sample index {found} does not follow {previous} (indices must increase by 1)")]
    SampleIndex { line: u64, previous: i64, found: i64 },

    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no windows left after filtering")]
    EmptyDataset,

    #[error("training data has zero variance")]
    ZeroVariance,

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("non-finite activation at step {step}")]
    NonFiniteActivation { step: usize },

    #[error("geometry mismatch: {0}")]
    Geometry(String),

    #[error("matrix is singular")]
    Singular,

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("tensor is not recorded on this tape")]
    Detached,

    #[error("tape was already consumed by a backward pass")]
    TapeConsumed,

    #[error("unknown architecture `{0}`")]
    UnknownArchitecture(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("candidate {candidate}: {source}")]
    Candidate {
        candidate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
