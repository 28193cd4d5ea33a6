use std::io;

use panogeo_core::Error as CoreError;

/// Errors from file formats, the benchmark harness and the CLI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("i/o failure: {0}")]
    IoFailure(#[from] io::Error),
    #[error("bad magic bytes: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("feature file version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u16, found: u16 },
    #[error("index format version {found} is not supported (expected {expected})")]
    FormatVersionMismatch { expected: u16, found: u16 },
    #[error("checksum mismatch or truncated file")]
    ChecksumMismatch,
    #[error("unsupported element type {0}")]
    UnsupportedDtype(u8),
    #[error("count mismatch: {0}")]
    CountMismatch(String),
    #[error("panorama {id} is missing view {view}")]
    MissingView { id: String, view: String },
    #[error("duplicate or conflicting row for {id}/{view}")]
    DuplicateRow { id: String, view: String },
    #[error("malformed metadata row {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("malformed index body: {0}")]
    MalformedIndex(String),
    #[error("length mismatch: {0} result sets vs {1} truths")]
    LengthMismatch(usize, usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Machine-parsable error name.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Core(e) => e.name(),
            Error::IoFailure(_) => "IoFailure",
            Error::BadMagic { .. } => "BadMagic",
            Error::VersionMismatch { .. } => "VersionMismatch",
            Error::FormatVersionMismatch { .. } => "FormatVersionMismatch",
            Error::ChecksumMismatch => "ChecksumMismatch",
            Error::UnsupportedDtype(_) => "UnsupportedDtype",
            Error::CountMismatch(_) => "CountMismatch",
            Error::MissingView { .. } => "MissingView",
            Error::DuplicateRow { .. } => "DuplicateRow",
            Error::MalformedRow { .. } => "MalformedRow",
            Error::MalformedIndex(_) => "MalformedIndex",
            Error::LengthMismatch(..) => "LengthMismatch",
            Error::InvalidConfig(_) => "InvalidConfig",
        }
    }

    /// Process exit status: 1 usage, 2 data format, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::Core(CoreError::InvalidConfig(_)) => 1,
            Error::IoFailure(_) => 3,
            _ => 2,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::IoFailure(io),
            other => Error::MalformedRow {
                line,
                reason: format!("{other:?}"),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
