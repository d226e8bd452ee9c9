//! The `.regen` redundancy container and the `.sha256` sidecar.
//!
//! A regen file is laid out as follows, all integers unsigned big-endian:
//!
//! | offset            | length       | contents                         |
//! |-------------------|--------------|----------------------------------|
//! | 0                 | 5            | magic `REGEN`                    |
//! | 5                 | 2            | format version (1)               |
//! | 7                 | 2            | checksum block length in bytes   |
//! | 9                 | 2            | parity block count               |
//! | 11                | 2 * pb * cb  | Fletcher-16 table, parity-block major |
//! | 11 + 2 * pb * cb  | pbl          | XOR parity of the parity blocks  |

use std::ffi::OsString;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use crate::codec::Checksum16;
use crate::error::{Error, Result};
use crate::geometry::GeometryPlan;

pub const MAGIC: &[u8; 5] = b"REGEN";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegenHeader {
    pub version: u16,
    pub checksum_block_len: u16,
    pub parity_blocks: u16,
}

impl RegenHeader {
    pub fn new(checksum_block_len: u16, parity_blocks: u16) -> Self {
        RegenHeader {
            version: FORMAT_VERSION,
            checksum_block_len,
            parity_blocks,
        }
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..5].copy_from_slice(MAGIC);
        out[5..7].copy_from_slice(&self.version.to_be_bytes());
        out[7..9].copy_from_slice(&self.checksum_block_len.to_be_bytes());
        out[9..11].copy_from_slice(&self.parity_blocks.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                expected: HEADER_LEN as u64,
                actual: bytes.len() as u64,
            });
        }
        if &bytes[0..5] != MAGIC {
            return Err(Error::NotARegenFile);
        }
        let be16 = |at: usize| u16::from_be_bytes([bytes[at], bytes[at + 1]]);
        let header = RegenHeader {
            version: be16(5),
            checksum_block_len: be16(7),
            parity_blocks: be16(9),
        };
        if header.version > FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(header.version));
        }
        if header.version == 0 {
            return Err(Error::MalformedHeader("version 0 is reserved".into()));
        }
        if header.checksum_block_len == 0 {
            return Err(Error::MalformedHeader("checksum block length is 0".into()));
        }
        if header.parity_blocks == 0 {
            return Err(Error::MalformedHeader("parity block count is 0".into()));
        }
        Ok(header)
    }

    /// The layout this header implies for an archive of `file_size` bytes.
    pub fn geometry(&self, file_size: u64) -> Result<GeometryPlan> {
        GeometryPlan::new(
            file_size,
            u64::from(self.parity_blocks),
            u64::from(self.checksum_block_len),
        )
    }
}

/// A fully parsed regen file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegenArtifact {
    pub header: RegenHeader,
    /// `pb * cb` checksums, parity-block major.
    pub checksums: Vec<Checksum16>,
    /// XOR parity, `pbl` bytes.
    pub parity: Vec<u8>,
}

impl RegenArtifact {
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + 2 * self.checksums.len() + self.parity.len()
    }

    /// Checksum of block `j` in parity block `i`, given `cb` blocks per parity block.
    pub fn checksum(&self, i: u64, j: u64, checksum_blocks: u64) -> Checksum16 {
        self.checksums[(i * checksum_blocks + j) as usize]
    }

    /// Stored parity for checksum block `j`, truncated at the parity blob end.
    pub fn parity_segment(&self, j: u64, checksum_block_len: u64) -> &[u8] {
        let start = (j * checksum_block_len) as usize;
        let end = (start + checksum_block_len as usize).min(self.parity.len());
        &self.parity[start..end]
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&self.header.encode())?;
        let mut table = Vec::with_capacity(2 * self.checksums.len());
        for c in &self.checksums {
            table.extend_from_slice(&c.to_be_bytes());
        }
        w.write_all(&table)?;
        w.write_all(&self.parity)?;
        w.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_to(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }

    /// Parses a regen file belonging to an archive of `file_size` bytes.
    ///
    /// The body length must match exactly what the header and the archive
    /// size imply; anything else is a [`Error::GeometryMismatch`].
    pub fn from_bytes(bytes: &[u8], file_size: u64) -> Result<(Self, GeometryPlan)> {
        let header = RegenHeader::decode(bytes)?;
        let geometry = header.geometry(file_size)?;
        let expected = geometry.regen_file_len();
        if bytes.len() as u64 != expected {
            return Err(Error::GeometryMismatch {
                expected,
                actual: bytes.len() as u64,
            });
        }
        let table_end = HEADER_LEN + 2 * geometry.total_checksum_blocks() as usize;
        let checksums = bytes[HEADER_LEN..table_end]
            .chunks_exact(2)
            .map(|c| Checksum16::from_be_bytes([c[0], c[1]]))
            .collect();
        let artifact = RegenArtifact {
            header,
            checksums,
            parity: bytes[table_end..].to_vec(),
        };
        Ok((artifact, geometry))
    }

    pub fn read_from<R: Read>(mut r: R, file_size: u64) -> Result<(Self, GeometryPlan)> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes, file_size)
    }
}

fn with_suffix(archive: &Path, suffix: &str) -> PathBuf {
    let mut name = OsString::from(archive.as_os_str());
    name.push(suffix);
    PathBuf::from(name)
}

/// `<archive>.regen`
pub fn regen_path(archive: &Path) -> PathBuf {
    with_suffix(archive, ".regen")
}

/// `<archive>.sha256`
pub fn sidecar_path(archive: &Path) -> PathBuf {
    with_suffix(archive, ".sha256")
}

/// Writes `digest` as 64 lowercase hex characters and a newline.
pub fn write_sidecar_hash(path: &Path, digest: &str) -> Result<()> {
    let digest = normalize_digest(digest)?;
    fs::write(path, format!("{digest}\n"))?;
    Ok(())
}

/// Reads a sidecar, tolerating uppercase hex and trailing whitespace.
pub fn read_sidecar_hash(path: &Path) -> Result<String> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(Error::MissingSidecar(path.to_path_buf()))
        }
        Err(e) if e.kind() == io::ErrorKind::InvalidData => {
            return Err(Error::MalformedSidecar("not valid UTF-8".into()))
        }
        Err(e) => return Err(e.into()),
    };
    normalize_digest(text.trim_end())
}

fn normalize_digest(digest: &str) -> Result<String> {
    if digest.len() != 64 {
        return Err(Error::MalformedSidecar(format!(
            "expected 64 hex characters, found {}",
            digest.len()
        )));
    }
    if !digest.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(Error::MalformedSidecar(
            "non-hex character in digest".into(),
        ));
    }
    Ok(digest.to_ascii_lowercase())
}
