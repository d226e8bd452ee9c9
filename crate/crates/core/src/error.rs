use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("file of {file_size} bytes is too small for {parity_blocks} parity blocks")]
    FileTooSmall { file_size: u64, parity_blocks: u64 },

    #[error("not a regen file (bad magic sequence)")]
    NotARegenFile,

    #[error("unsupported regen format version {0}")]
    UnsupportedVersion(u16),

    #[error("malformed regen header: {0}")]
    MalformedHeader(String),

    #[error("truncated file: expected at least {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    /// The regen file does not describe an archive of the current size.
    #[error("regen file is {actual} bytes but the archive geometry implies {expected}")]
    GeometryMismatch { expected: u64, actual: u64 },

    #[error("missing hash sidecar {}", .0.display())]
    MissingSidecar(PathBuf),

    #[error("malformed hash sidecar: {0}")]
    MalformedSidecar(String),

    #[error("missing regen file {}", .0.display())]
    MissingRegen(PathBuf),

    #[error("refusing to overwrite existing {}", .0.display())]
    OutputExists(PathBuf),

    /// A correction write failed after `applied` of `total` writes succeeded.
    #[error("write failed after applying {applied} of {total} corrections: {source}")]
    PartialWrite {
        applied: usize,
        total: usize,
        #[source]
        source: io::Error,
    },

    #[error(
        "could not place {bursts} non-overlapping bursts of {bits} bits after {retries} retries"
    )]
    PlacementFailure {
        bursts: u64,
        bits: u64,
        retries: u32,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}
