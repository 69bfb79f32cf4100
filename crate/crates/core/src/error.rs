use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("invalid json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("layer `{layer}`: dimension mismatch: {detail}")]
    DimMismatch { layer: String, detail: String },

    #[error("layer `{layer}`: gram matrix is not symmetric (relative asymmetry {asym:.3e})")]
    NonSymmetricGram { layer: String, asym: f64 },

    #[error("layer `{layer}`: {detail}")]
    Numerical { layer: String, detail: String },

    #[error("layer `{layer}`: {source}")]
    Layer {
        layer: String,
        #[source]
        source: Box<Error>,
    },

    #[error("infeasible allocation: {0}")]
    Infeasible(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(layer: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::DimMismatch {
            layer: layer.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn numerical(layer: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numerical {
            layer: layer.into(),
            detail: detail.into(),
        }
    }

    /// Attach a layer name to errors raised without one (inner math routines
    /// do not know which layer they are working on).
    pub fn in_layer(self, name: &str) -> Self {
        match self {
            Error::DimMismatch { layer, detail } if layer.is_empty() => Error::DimMismatch {
                layer: name.to_string(),
                detail,
            },
            Error::Numerical { layer, detail } if layer.is_empty() => Error::Numerical {
                layer: name.to_string(),
                detail,
            },
            Error::NonSymmetricGram { layer, asym } if layer.is_empty() => {
                Error::NonSymmetricGram {
                    layer: name.to_string(),
                    asym,
                }
            }
            Error::Layer { .. } => self,
            other @ (Error::Io { .. } | Error::Format { .. } | Error::Json { .. }) => {
                Error::Layer {
                    layer: name.to_string(),
                    source: Box::new(other),
                }
            }
            other => other,
        }
    }

    /// Process exit code for the command-line tool: 1 for usage and input
    /// problems, 2 for numerical or infeasibility failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Layer { source, .. } => source.exit_code(),
            Error::Numerical { .. } | Error::Infeasible(_) => 2,
            _ => 1,
        }
    }
}
