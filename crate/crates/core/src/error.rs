use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: non-square or negative matrices, ids outside the space,
    /// spaces that are disconnected at their mesh.
    #[error("structural error: {0}")]
    Structural(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    /// Scale window problems (too many scales, tail bound above tolerance).
    #[error("configuration error: {0}")]
    Configuration(String),
    /// Two inputs that must describe the same point set do not.
    #[error("size mismatch: {0}")]
    Mismatch(String),
    #[error("size cap exceeded: {0}")]
    SizeCap(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn configuration(msg: impl Into<String>) -> Self {
        Error::Configuration(msg.into())
    }
}
