use std::path::PathBuf;

use thiserror::Error;

use crate::fields::TaskKind;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Caller supplied an invalid argument or configuration.
    Usage,
    /// A file, wire message or dataset is malformed or inconsistent.
    Data,
    /// A numerical routine failed (overflow, non-convergence, non-finite values).
    Numerical,
}

#[derive(Debug, Error)]
pub enum FlmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, got {actual} ({context})")]
    LengthMismatch {
        expected: usize,
        actual: usize,
        context: String,
    },

    #[error("task mismatch: expected {expected}, got {actual}")]
    TaskMismatch { expected: TaskKind, actual: TaskKind },

    #[error("degenerate normalization: {which} range is empty (min = max = {value})")]
    DegenerateNormalization { which: &'static str, value: f64 },

    #[error("non-finite value {value} in {context}")]
    NonFinite { value: f64, context: String },

    #[error("overflow evaluating term `{term}`: exponent {exponent} exceeds 700")]
    Overflow { term: String, exponent: f64 },

    #[error("feature for sample {sample}, term {term} (`{rendered}`): {source}")]
    Feature {
        sample: usize,
        term: usize,
        rendered: String,
        #[source]
        source: Box<FlmError>,
    },

    #[error("bad magic bytes {found:?} (expected \"FLM1\")")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("truncated payload: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },

    #[error("malformed container: {0}")]
    Malformed(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("design matrix of {rows}x{cols} needs {bytes} bytes, above the cap of {cap} bytes")]
    MemoryCap {
        rows: usize,
        cols: usize,
        bytes: u128,
        cap: u64,
    },

    #[error("conjugate gradients did not converge: relative residual {residual:e} after {iterations} iterations")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("non-positive permeability {value} at cell {index}")]
    NonPositivePermeability { index: usize, value: f64 },

    #[error("probe request {id}: {message}")]
    Probe { id: u64, message: String },

    #[error("probe handshake failed: {0}")]
    Handshake(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl FlmError {
    pub fn class(&self) -> ErrorClass {
        match self {
            FlmError::InvalidArgument(_) | FlmError::MemoryCap { .. } => ErrorClass::Usage,
            FlmError::NonFinite { .. }
            | FlmError::Overflow { .. }
            | FlmError::NoConvergence { .. }
            | FlmError::Feature { .. }
            | FlmError::DegenerateNormalization { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FlmError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = FlmError> = std::result::Result<T, E>;
