//! Partial redundancy for single archive files.
//!
//! An archive is protected by two layers of redundancy kept in a separate
//! `.regen` file: a Fletcher-16 checksum for every small checksum block, and
//! the XOR parity of a handful of large parity blocks. Damaged checksum blocks
//! are found by their checksums; the parity then points at the suspect bits,
//! and subsets of those bits are flipped until the checksum matches again.
//! A `.sha256` sidecar covers the whole file.

pub mod blockio;
pub mod cli;
pub mod codec;
mod error;
pub mod faultlab;
pub mod format;
pub mod geometry;
pub mod pipeline;
pub mod reliability;

pub use error::{Error, Result};
