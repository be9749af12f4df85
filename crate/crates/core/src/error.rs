use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shapes, ranges, extents).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An operation was invoked in the wrong order, e.g. backward before forward.
    #[error("invalid state: {0}")]
    State(String),

    /// JPEG encoding or decoding of an in-memory raster failed.
    #[error("codec error: {0}")]
    Codec(String),

    /// An image file could not be read or decoded.
    #[error("failed to decode {}: {reason}", path.display())]
    Decode { path: PathBuf, reason: String },

    /// The dataset tree could not be turned into a usable manifest.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    /// The manifest cannot be split as requested.
    #[error("split error: {0}")]
    Split(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("archive error: {0}")]
    Archive(#[from] ArchiveError),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Failures while reading a model archive.
#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("cannot read {}: {reason}", path.display())]
    Unreadable { path: PathBuf, reason: String },

    #[error("not a model archive (bad magic bytes)")]
    BadMagic,

    #[error("archive is truncated: needed {needed} bytes, found {found}")]
    Truncated { needed: u64, found: u64 },

    #[error("malformed archive header: {0}")]
    Header(String),

    #[error("unsupported archive format version {0}")]
    UnsupportedVersion(u32),

    #[error("archive architecture does not match the network: {0}")]
    ArchitectureMismatch(String),

    #[error("archive has {0} unexpected trailing bytes")]
    TrailingBytes(u64),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn decode(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Decode { path: path.into(), reason: reason.to_string() }
    }
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::Contract(format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure;
