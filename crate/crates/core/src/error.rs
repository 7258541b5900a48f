use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("row {row}: label {label} out of range for k = {k}")]
    LabelOutOfRange { row: usize, label: usize, k: usize },

    #[error("class {0} has no rows to build a centroid from")]
    EmptyClass(usize),

    #[error("no points supplied")]
    NoPoints,

    #[error("length mismatch: {what} has {actual} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("threshold scale factor {0} outside [0, 1)")]
    InvalidFactor(f64),

    #[error("degenerate fit: all x values are equal")]
    DegenerateFit,

    #[error("nearest distance D[{row}][{col}] is missing; likelihood undefined")]
    MissingDistance { row: usize, col: usize },

    #[error("nearest distance D[{row}][{col}] is zero; reciprocal undefined")]
    ZeroDistance { row: usize, col: usize },

    #[error("perturbation level {0} outside 0..=10")]
    InvalidLevel(u8),

    #[error("unknown perturbation type code {0}")]
    InvalidTypeCode(u8),

    #[error("sidecar entry {index}: {reason}")]
    InvalidSidecarEntry { index: usize, reason: String },

    #[error("{path}: bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("{path}: bad magic {found:?}, expected \"SMXP\"")]
    BadSmxMagic { path: PathBuf, found: [u8; 4] },

    #[error("{path}: unsupported format version {version}")]
    UnsupportedVersion { path: PathBuf, version: u16 },

    #[error("{path}: truncated payload, expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{path}: {extra} trailing bytes after declared payload")]
    TrailingBytes { path: PathBuf, extra: u64 },

    #[error("{path}: declared size overflows ({count} x {rows} x {cols})")]
    SizeOverflow {
        path: PathBuf,
        count: u64,
        rows: u64,
        cols: u64,
    },

    #[error("{path}: row {row}: expected {expected} columns, found {actual}")]
    KMismatch {
        path: PathBuf,
        row: usize,
        expected: usize,
        actual: usize,
    },

    #[error("{path}: row {row}, column {col}: non-finite value")]
    NonFinite {
        path: PathBuf,
        row: usize,
        col: usize,
    },

    #[error("{path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("writer for {path} received {actual} records, header declared {expected}")]
    CountMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("report is missing mandatory section `{0}`")]
    MissingSection(&'static str),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
