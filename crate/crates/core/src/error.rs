use thiserror::Error;

use crate::numerics::Representation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema error at `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("CSV error: {0}")]
    Csv(String),

    #[error("model is invalid: {}", .0.join("; "))]
    InvalidModel(Vec<String>),

    #[error("shape mismatch at node `{node}`: {detail}")]
    ShapeMismatch { node: String, detail: String },

    #[error("{repr} execution requires quantization calibration ({detail})")]
    UncalibratedQuant {
        repr: Representation,
        detail: String,
    },

    #[error("MAPE is undefined: ground truth contains zero at sample {index}")]
    DivisionDomain { index: usize },

    #[error("ground-truth variance is zero; R2 and EVS are undefined")]
    DegenerateVariance,

    #[error("metric context is missing `{0}`")]
    MissingContext(&'static str),

    #[error("target score {target} outside LUT range [{lo}, {hi}]")]
    TargetOutOfRange { target: f64, lo: f64, hi: f64 },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("symbolic expansion exceeds the limit of {limit} scalar operations")]
    ExpansionTooLarge { limit: usize },

    #[error("unsupported operator `{0}`")]
    UnsupportedOp(String),

    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl Error {
    pub fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn shape(node: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            node: node.into(),
            detail: detail.into(),
        }
    }

    /// True for errors caused by malformed input files or arguments, as
    /// opposed to a well-formed request with a negative outcome.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Syntax { .. } | Error::Schema { .. } | Error::Csv(_)
        )
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Csv(format!("{other:?}")),
        }
    }
}
