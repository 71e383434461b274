use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument was outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("degenerate observations: camera matrix has rank {rank}, need 7")]
    DegenerateObservations { rank: usize },

    #[error("mapping degenerate: quaternion part has norm {norm:e}")]
    MappingDegenerate { norm: f64 },

    #[error("unreachable pose: final residual {position:e} m / {orientation:e} rad after {iterations} iterations")]
    Unreachable {
        position: f64,
        orientation: f64,
        iterations: usize,
    },

    #[error("joint {index} value {value} outside limits [{low}, {high}]")]
    JointLimit {
        index: usize,
        value: f64,
        low: f64,
        high: f64,
    },

    #[error("safety violation: {0}")]
    Safety(String),

    #[error("state error: {0}")]
    State(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("training diverged at epoch {epoch}, step {step}: total loss is {value}")]
    Diverged { epoch: usize, step: usize, value: f64 },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
