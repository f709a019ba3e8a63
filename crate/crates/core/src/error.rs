use thiserror::Error;

/// Every failure the toolkit can report.
///
/// Variants group into the process exit codes used by the command-line
/// front end: schema problems exit 2, unknown references 3, evaluation
/// and solver failures 4, dataset generation failures 5.
#[derive(Debug, Error)]
pub enum Error {
    /// A value outside the domain of an operation (non-positive box size,
    /// probability outside `[0, 1]`, ...).
    #[error("invalid input: {0}")]
    Domain(String),

    /// Mismatched lengths or tensor dimensions.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// More ground-truth views than prediction slots.
    #[error("capacity exceeded: {have} ground-truth views do not fit into {slots} slots")]
    Capacity { have: usize, slots: usize },

    /// A NaN or infinite value where a finite one is required.
    #[error("non-finite value: {0}")]
    Numeric(String),

    /// Invalid configuration (head count not dividing model width, empty
    /// range, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown image id `{0}`")]
    Reference(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("generation failed for image `{image}`: {reason}")]
    Generation { image: String, reason: String },

    /// A file that does not follow its schema. The message names the
    /// offending record.
    #[error("schema violation: {0}")]
    Schema(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) | Error::Io { .. } | Error::Domain(_) | Error::Config(_) => 2,
            Error::Reference(_) => 3,
            Error::Evaluation(_) | Error::Capacity { .. } | Error::Shape(_) | Error::Numeric(_) => 4,
            Error::Generation { .. } => 5,
        }
    }
}
