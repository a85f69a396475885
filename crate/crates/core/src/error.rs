use thiserror::Error;

/// Errors raised by the library.
///
/// Every variant names the offending parameter, dimension or check so that
/// callers (and the experiment runner) can report it verbatim.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("{name}: {reason}")]
    Domain { name: &'static str, reason: String },

    /// A numerical routine could not deliver its contract.
    #[error("numerical failure in {context}: {reason}")]
    Numerical { context: &'static str, reason: String },

    /// A requested computation exceeds the configured resource budget.
    #[error("resource budget exceeded for {dimension}: {reason}")]
    Resource { dimension: &'static str, reason: String },

    /// The experiment configuration is invalid.
    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn numerical(context: &'static str, reason: impl Into<String>) -> Self {
        Error::Numerical {
            context,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
