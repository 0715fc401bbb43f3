use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ScsrError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ScsrError {
    #[error("{what} out of bounds: {detail}")]
    Bounds { what: &'static str, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("shape mismatch: expected {expected}, got {actual} ({context})")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("degenerate sampling mask: {0}")]
    DegenerateMask(String),

    #[error("non-finite values at layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("non-finite gradient in parameter block {block}")]
    NonFiniteGradient { block: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    Convergence {
        iterations: usize,
        grad_norm: f64,
        last_iterate: Vec<f64>,
    },

    #[error("{}: bad magic, expected {expected:?}", .path.display())]
    BadMagic {
        path: PathBuf,
        expected: &'static str,
    },

    #[error("{}: unsupported format version {found} (expected {expected})", .path.display())]
    UnsupportedVersion {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{}: truncated payload ({detail})", .path.display())]
    Truncated { path: PathBuf, detail: String },

    #[error("{}: size mismatch: {detail}", .path.display())]
    SizeMismatch { path: PathBuf, detail: String },

    #[error("{}: header validation failed: {detail}", .path.display())]
    HeaderMismatch { path: PathBuf, detail: String },

    #[error("{}: malformed file: {detail}", .path.display())]
    Malformed { path: PathBuf, detail: String },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse grouping used for CLI exit codes and machine-readable error lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Precondition,
    InvalidFile,
    Numeric,
    Io,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Precondition => "precondition",
            ErrorCategory::InvalidFile => "invalid-file",
            ErrorCategory::Numeric => "numeric",
            ErrorCategory::Io => "io",
        }
    }
}

impl ScsrError {
    pub fn category(&self) -> ErrorCategory {
        use ScsrError::*;
        match self {
            Bounds { .. }
            | Config(_)
            | Split(_)
            | InsufficientData(_)
            | Shape { .. }
            | DegenerateMask(_)
            | UndefinedMetric(_) => ErrorCategory::Precondition,
            NonFiniteActivation { .. }
            | NonFiniteLoss { .. }
            | NonFiniteGradient { .. }
            | Convergence { .. } => ErrorCategory::Numeric,
            BadMagic { .. }
            | UnsupportedVersion { .. }
            | Truncated { .. }
            | SizeMismatch { .. }
            | HeaderMismatch { .. }
            | Malformed { .. } => ErrorCategory::InvalidFile,
            Io { .. } => ErrorCategory::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ScsrError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        ScsrError::Malformed {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
