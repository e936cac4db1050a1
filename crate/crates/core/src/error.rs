use std::fmt;

use thiserror::Error;

/// Machine-readable reason attached to a configuration validation failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationCode {
    SingletonCluster,
    OverlappingBlocks,
    IncompleteCover,
    IndexOutOfRange,
    DimensionMismatch,
    OutOfDomain,
    NotPositiveDefinite,
    UnknownFamily,
    Malformed,
}

impl fmt::Display for ValidationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::SingletonCluster => "singleton_cluster",
            Self::OverlappingBlocks => "overlapping_blocks",
            Self::IncompleteCover => "incomplete_cover",
            Self::IndexOutOfRange => "index_out_of_range",
            Self::DimensionMismatch => "dimension_mismatch",
            Self::OutOfDomain => "out_of_domain",
            Self::NotPositiveDefinite => "not_positive_definite",
            Self::UnknownFamily => "unknown_family",
            Self::Malformed => "malformed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The request is well formed but not covered by the implemented theory.
    #[error("unsupported: {0}")]
    Capability(String),
    /// A numerical routine failed to reach its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid configuration at `{pointer}` ({code}): {message}")]
    Validation {
        code: ValidationCode,
        pointer: String,
        message: String,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Self::Domain(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Self::Numerical(msg.into())
    }

    pub fn capability(msg: impl Into<String>) -> Self {
        Self::Capability(msg.into())
    }

    pub fn validation(code: ValidationCode, pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Validation {
            code,
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Domain(_) | Self::Validation { .. } | Self::Dimension { .. } => 2,
            Self::Numerical(_) => 3,
            Self::Capability(_) => 4,
            Self::Io(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
