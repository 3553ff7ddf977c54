//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic in {path}: expected {expected:?}, found {found:?}")]
    BadMagic {
        path: PathBuf,
        expected: [u8; 4],
        found: [u8; 4],
    },

    #[error("unsupported version {found} in {path} (expected {expected})")]
    BadVersion {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("truncated payload in {path}: needed {needed} more bytes for {section}")]
    Truncated {
        path: PathBuf,
        section: &'static str,
        needed: usize,
    },

    #[error("parse error in {path} at line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("attribute `{attribute}` has length {got}, cloud has {expected} points")]
    AttributeLength {
        attribute: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("{context} must be non-empty")]
    Empty { context: &'static str },

    #[error("k = {k} out of range for {len} points")]
    KOutOfRange { k: usize, len: usize },

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("degenerate geometry: {msg}")]
    DegenerateGeometry { msg: &'static str },

    #[error("registration failed: {msg}")]
    RegistrationFailed { msg: String },

    #[error(
        "eigensolver did not converge after {iterations} iterations (residual {residual:.3e})"
    )]
    EigNotConverged { iterations: usize, residual: f64 },

    #[error("matrix {index} in batch: {source}")]
    BatchEig {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("pair {pair}: {source}")]
    Sequence {
        pair: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid rigid transform: {msg}")]
    InvalidTransform { msg: &'static str },

    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {msg}")]
    InvalidParam { msg: String },

    #[error("config error: {msg}")]
    Config { msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
