use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum UagError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: parse error: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("edge references unknown node id `{id}` ({path}:{line})")]
    UnknownNodeId {
        path: PathBuf,
        line: usize,
        id: String,
    },

    #[error("dimension mismatch in {op}: {lhs} vs {rhs}")]
    DimMismatch {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty mask: {0}")]
    EmptyMask(&'static str),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("output directory {0} already has results (use --force to overwrite)")]
    OutputExists(PathBuf),
}

pub type Result<T> = std::result::Result<T, UagError>;

impl UagError {
    /// Process exit code for the CLI: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            UagError::Config(_) | UagError::OutputExists(_) => 1,
            UagError::Io { .. }
            | UagError::Parse { .. }
            | UagError::UnknownNodeId { .. }
            | UagError::EmptyMask(_) => 2,
            UagError::DimMismatch { .. } | UagError::Domain(_) | UagError::Numeric(_) => 3,
        }
    }
}
