use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch{}: expected {expected:?}, got {actual:?}", layer_suffix(*.layer))]
    Shape {
        layer: Option<usize>,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unviable genome: {0}")]
    Unviable(String),

    #[error("malformed {what} at byte {offset}: {message}")]
    Format {
        what: &'static str,
        offset: u64,
        message: String,
    },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

fn layer_suffix(layer: Option<usize>) -> String {
    match layer {
        Some(i) => format!(" at layer {i}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(expected: &[usize], actual: &[usize]) -> Self {
        Error::Shape {
            layer: None,
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }

    /// Attaches a layer index to a shape error raised by a single layer.
    pub(crate) fn at_layer(self, index: usize) -> Self {
        match self {
            Error::Shape {
                expected, actual, ..
            } => Error::Shape {
                layer: Some(index),
                expected,
                actual,
            },
            other => other,
        }
    }

    /// Short machine-readable category used by the command-line error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::EmptyBatch => "empty-batch",
            Error::NonFinite(_) => "non-finite",
            Error::Degenerate(_) => "degenerate",
            Error::Unviable(_) => "unviable",
            Error::Format { .. } => "format",
            Error::Config { .. } => "config",
            Error::MissingFile(_) => "missing-file",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Image(_) => "image",
        }
    }
}
