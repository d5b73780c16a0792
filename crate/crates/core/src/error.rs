use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("generation failure: {0}")]
    GenerationFailure(String),

    #[error("data integrity: {0}")]
    DataIntegrity(String),

    #[error("complete or quasi-complete separation: {0}")]
    Separation(String),

    #[error("collinear design: {0}")]
    Collinearity(String),

    #[error("config: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("block {block} of subject {subject}: {source}")]
    Block {
        subject: String,
        block: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalFailure(msg.into())
    }

    /// True when the error (or the error it wraps) is a numerical failure.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NumericalFailure(_) => true,
            Error::Block { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
