use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, indices or configuration values that do not fit together.
    #[error("structural error: {0}")]
    Structural(String),

    /// A non-finite value where a finite one is required.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("generation error: {0}")]
    Generation(String),

    /// Training produced a non-finite objective or parameter.
    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    /// An estimator failure tagged with the term that was being estimated.
    #[error("term {term}: {source}")]
    Term {
        term: String,
        #[source]
        source: Box<Error>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Wraps an error with the name of the MI term it came from.
    pub fn in_term(self, term: &str) -> Self {
        Error::Term {
            term: term.to_string(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping term tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Term { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
