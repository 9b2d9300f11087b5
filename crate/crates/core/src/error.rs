use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A caller-supplied value is outside its valid range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An iterative method exhausted its budget without converging.
    #[error("no convergence: {0}")]
    Convergence(String),

    /// A non-finite value surfaced during optimization.
    #[error("numerical failure at iteration {iteration}: {message}")]
    Numerical { iteration: usize, message: String },

    /// Training of a cascade candidate failed.
    #[error("training of net {net} failed: {source}")]
    Training {
        net: usize,
        #[source]
        source: Box<Error>,
    },

    /// A per-k run inside a PC sweep failed.
    #[error("sweep at k = {k} failed: {source}")]
    Sweep {
        k: usize,
        #[source]
        source: Box<Error>,
    },

    /// A text input could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A persisted model violates a schema or numeric invariant.
    #[error("model load error: {0}")]
    Load(String),

    /// Underlying I/O failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
