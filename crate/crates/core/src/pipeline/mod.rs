//! Generate, verify and regenerate.
//!
//! Recovery runs in two phases. The scan phase walks every checksum block,
//! and for each block whose Fletcher-16 no longer matches it recomputes the
//! XOR parity of the block's pairing group, lists the bits where it disagrees
//! with the stored parity and searches subsets of those bits for one that
//! restores the checksum. Nothing is written during the scan. The apply phase
//! then writes every correction whose checksum block index did not fail in
//! any parity block, since a failure at index `j` means the parity evidence
//! shared by all blocks at `j` cannot be trusted.

mod search;

use std::collections::hash_map::Entry;
use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Serialize, Serializer};

pub use search::{
    attempt_block_correction, generate_combinations, locate_bad_bits, Combinations,
    CorrectionAttempt, DEFAULT_ATTEMPT_CAP,
};

use crate::blockio::{ReadAt, WriteAt};
use crate::codec::{fletcher16, sha256_hex, xor_into};
use crate::error::{Error, Result};
use crate::format::{
    read_sidecar_hash, regen_path, sidecar_path, write_sidecar_hash, RegenArtifact, RegenHeader,
};
use crate::geometry::{plan_geometry, GeometryPlan};

/// Target read size when streaming through a parity block.
const CHUNK_TARGET: u64 = 1 << 16;

fn chunk_len(geometry: &GeometryPlan) -> u64 {
    let cbl = geometry.checksum_block_len;
    cbl * (CHUNK_TARGET / cbl).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerateOptions {
    pub parity_percent: u32,
    pub checksum_block_len: u64,
    /// Replace existing `.regen` / `.sha256` outputs.
    pub overwrite: bool,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            parity_percent: 5,
            checksum_block_len: 64,
            overwrite: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerateSummary {
    pub geometry: GeometryPlan,
    pub digest: String,
    pub regen_path: PathBuf,
    pub sidecar_path: PathBuf,
    pub regen_len: u64,
}

/// Computes the checksum table and parity for `source` in one pass.
pub fn build_artifact<R: ReadAt + ?Sized>(
    source: &R,
    geometry: &GeometryPlan,
) -> io::Result<RegenArtifact> {
    let pbl = geometry.parity_block_len;
    let cbl = geometry.checksum_block_len as usize;
    let step = chunk_len(geometry);
    let mut checksums = Vec::with_capacity(geometry.total_checksum_blocks() as usize);
    let mut parity = vec![0u8; pbl as usize];
    let mut buf = vec![0u8; step.min(pbl) as usize];

    for i in 0..geometry.parity_blocks {
        let base = i * pbl;
        let mut off = 0;
        while off < pbl {
            let len = step.min(pbl - off) as usize;
            let chunk = &mut buf[..len];
            source.read_exact_at(chunk, base + off)?;
            checksums.extend(chunk.chunks(cbl).map(fletcher16));
            xor_into(&mut parity[off as usize..off as usize + len], chunk);
            off += len as u64;
        }
    }

    Ok(RegenArtifact {
        header: RegenHeader::new(
            geometry.checksum_block_len as u16,
            geometry.parity_blocks as u16,
        ),
        checksums,
        parity,
    })
}

/// Writes `<archive>.sha256` and `<archive>.regen`.
pub fn generate(archive: &Path, options: &GenerateOptions) -> Result<GenerateSummary> {
    let regen = regen_path(archive);
    let sidecar = sidecar_path(archive);
    if !options.overwrite {
        for out in [&sidecar, &regen] {
            if out.exists() {
                return Err(Error::OutputExists(out.clone()));
            }
        }
    }

    let file = File::open(archive)?;
    let size = file.metadata()?.len();
    let geometry = plan_geometry(size, options.parity_percent, options.checksum_block_len)?;

    let digest = sha256_hex(BufReader::new(&file))?;
    write_sidecar_hash(&sidecar, &digest)?;

    let artifact = build_artifact(&file, &geometry)?;
    let dir = regen
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    artifact.write_to(BufWriter::new(tmp.as_file_mut()))?;
    tmp.persist(&regen).map_err(|e| e.error)?;

    Ok(GenerateSummary {
        geometry,
        digest,
        regen_path: regen,
        sidecar_path: sidecar,
        regen_len: artifact.encoded_len() as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verification {
    Match { digest: String },
    Mismatch { expected: String, actual: String },
}

impl Verification {
    pub fn is_match(&self) -> bool {
        matches!(self, Verification::Match { .. })
    }
}

/// Compares the archive's SHA-256 against its sidecar.
pub fn verify(archive: &Path) -> Result<Verification> {
    let expected = read_sidecar_hash(&sidecar_path(archive))?;
    let actual = sha256_hex(BufReader::new(File::open(archive)?))?;
    Ok(if actual == expected {
        Verification::Match { digest: actual }
    } else {
        Verification::Mismatch { expected, actual }
    })
}

/// One repaired checksum block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Correction {
    /// Absolute archive offset of the block.
    pub offset: u64,
    pub parity_block: u64,
    /// Checksum block index within the parity block.
    pub block_index: u64,
    /// Combinations tried before the match, inclusive.
    pub attempts: u64,
    #[serde(rename = "length", serialize_with = "serialize_len")]
    pub data: Vec<u8>,
}

fn serialize_len<S: Serializer>(data: &[u8], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u64(data.len() as u64)
}

impl Correction {
    pub fn len(&self) -> u64 {
        self.data.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanResult {
    pub corrections: Vec<Correction>,
    pub failed_block_indexes: BTreeSet<u64>,
    pub mismatched_blocks: u64,
    pub combinations_tried: u64,
}

/// Read-only recovery phase: finds a correction for every checksum mismatch
/// it can, and records the block indexes where the search came up empty.
pub fn scan<R: ReadAt + ?Sized>(
    source: &R,
    geometry: &GeometryPlan,
    artifact: &RegenArtifact,
    attempt_cap: u64,
) -> io::Result<ScanResult> {
    let pbl = geometry.parity_block_len;
    let cbl = geometry.checksum_block_len;
    let step = chunk_len(geometry);
    let mut buf = vec![0u8; step.min(pbl) as usize];
    let mut bad_bits_by_index: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut result = ScanResult::default();

    for i in 0..geometry.parity_blocks {
        let mut off = 0;
        while off < pbl {
            let len = step.min(pbl - off) as usize;
            let chunk = &mut buf[..len];
            source.read_exact_at(chunk, i * pbl + off)?;
            for (t, block) in chunk.chunks(cbl as usize).enumerate() {
                let j = off / cbl + t as u64;
                let stored = artifact.checksum(i, j, geometry.checksum_blocks);
                if fletcher16(block) == stored {
                    continue;
                }
                result.mismatched_blocks += 1;
                if let Entry::Vacant(slot) = bad_bits_by_index.entry(j) {
                    slot.insert(pairing_bad_bits(source, geometry, artifact, j)?);
                }
                let attempt =
                    attempt_block_correction(block, &bad_bits_by_index[&j], stored, attempt_cap);
                result.combinations_tried += attempt.attempts;
                match attempt.corrected {
                    Some(data) => result.corrections.push(Correction {
                        offset: geometry.block_offset(i, j),
                        parity_block: i,
                        block_index: j,
                        attempts: attempt.attempts,
                        data,
                    }),
                    None => {
                        result.failed_block_indexes.insert(j);
                    }
                }
            }
            off += len as u64;
        }
    }
    Ok(result)
}

/// Bits of checksum block `j` where the recomputed parity of the pairing
/// group disagrees with the stored parity.
fn pairing_bad_bits<R: ReadAt + ?Sized>(
    source: &R,
    geometry: &GeometryPlan,
    artifact: &RegenArtifact,
    j: u64,
) -> io::Result<Vec<usize>> {
    let len = geometry.block_len(j) as usize;
    let mut computed = vec![0u8; len];
    let mut segment = vec![0u8; len];
    for k in 0..geometry.parity_blocks {
        source.read_exact_at(&mut segment, geometry.block_offset(k, j))?;
        xor_into(&mut computed, &segment);
    }
    let stored = artifact.parity_segment(j, geometry.checksum_block_len);
    Ok(locate_bad_bits(&computed, stored, len))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ApplyCounts {
    pub applied: usize,
    pub skipped: usize,
}

/// Writes every correction whose block index is not in `failed`.
pub fn apply_corrections<W: WriteAt + ?Sized>(
    corrections: &[Correction],
    failed: &BTreeSet<u64>,
    target: &mut W,
) -> Result<ApplyCounts> {
    let total = corrections
        .iter()
        .filter(|c| !failed.contains(&c.block_index))
        .count();
    let mut counts = ApplyCounts::default();
    for c in corrections {
        if failed.contains(&c.block_index) {
            counts.skipped += 1;
            continue;
        }
        target
            .write_all_at(&c.data, c.offset)
            .map_err(|source| Error::PartialWrite {
                applied: counts.applied,
                total,
                source,
            })?;
        counts.applied += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    /// No checksum block needed repair.
    Clean,
    Repaired,
    PartialFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecoveryReport {
    pub outcome: Outcome,
    pub mismatched_blocks: u64,
    pub corrections_found: usize,
    pub corrections_applied: usize,
    pub corrections_skipped: usize,
    pub failed_block_indexes: BTreeSet<u64>,
    pub combinations_tried: u64,
    /// Post-repair digest check; `None` when no sidecar was available.
    pub digest_match: Option<bool>,
    pub corrections: Vec<Correction>,
}

impl RecoveryReport {
    fn new(scan: ScanResult, counts: ApplyCounts, digest_match: Option<bool>) -> Self {
        let outcome = match (scan.mismatched_blocks, digest_match) {
            (_, Some(false)) => Outcome::PartialFailure,
            (0, _) => Outcome::Clean,
            (_, Some(true)) => Outcome::Repaired,
            (_, None) if scan.failed_block_indexes.is_empty() => Outcome::Repaired,
            (_, None) => Outcome::PartialFailure,
        };
        RecoveryReport {
            outcome,
            mismatched_blocks: scan.mismatched_blocks,
            corrections_found: scan.corrections.len(),
            corrections_applied: counts.applied,
            corrections_skipped: counts.skipped,
            failed_block_indexes: scan.failed_block_indexes,
            combinations_tried: scan.combinations_tried,
            digest_match,
            corrections: scan.corrections,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegenerateOptions {
    /// Combinations tried per mismatched block.
    pub attempt_cap: u64,
}

impl Default for RegenerateOptions {
    fn default() -> Self {
        RegenerateOptions {
            attempt_cap: DEFAULT_ATTEMPT_CAP,
        }
    }
}

/// Scan and repair an in-memory archive against a parsed regen artifact.
///
/// There is no sidecar here, so the outcome rests on the scan alone.
pub fn recover_buffer(
    archive: &mut [u8],
    artifact: &RegenArtifact,
    options: &RegenerateOptions,
) -> Result<RecoveryReport> {
    let geometry = artifact.header.geometry(archive.len() as u64)?;
    let expected = geometry.regen_file_len();
    if artifact.encoded_len() as u64 != expected {
        return Err(Error::GeometryMismatch {
            expected,
            actual: artifact.encoded_len() as u64,
        });
    }
    let scan = scan(&*archive, &geometry, artifact, options.attempt_cap)?;
    let counts = apply_corrections(&scan.corrections, &scan.failed_block_indexes, archive)?;
    Ok(RecoveryReport::new(scan, counts, None))
}

/// Repairs `archive` in place from `<archive>.regen`, then re-checks the
/// digest against `<archive>.sha256` if one exists.
pub fn regenerate(archive: &Path, options: &RegenerateOptions) -> Result<RecoveryReport> {
    let regen = regen_path(archive);
    let regen_bytes = match fs::read(&regen) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(Error::MissingRegen(regen)),
        Err(e) => return Err(e.into()),
    };
    let source = File::open(archive)?;
    let size = source.metadata()?.len();
    let (artifact, geometry) = RegenArtifact::from_bytes(&regen_bytes, size)?;

    let scan = scan(&source, &geometry, &artifact, options.attempt_cap)?;
    drop(source);

    let counts = if scan.corrections.is_empty() {
        ApplyCounts {
            applied: 0,
            skipped: 0,
        }
    } else {
        let mut target = OpenOptions::new().write(true).open(archive)?;
        let counts = apply_corrections(&scan.corrections, &scan.failed_block_indexes, &mut target)?;
        target.sync_all()?;
        counts
    };

    let digest_match = match verify(archive) {
        Ok(v) => Some(v.is_match()),
        Err(Error::MissingSidecar(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(RecoveryReport::new(scan, counts, digest_match))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bytes(len: usize, seed: u64) -> Vec<u8> {
        let mut v = vec![0u8; len];
        ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut v);
        v
    }

    fn flip(data: &mut [u8], bit: u64) {
        data[(bit / 8) as usize] ^= 1 << (bit % 8);
    }

    #[test]
    fn artifact_matches_direct_computation() {
        let data = random_bytes(1_000, 1);
        let g = plan_geometry(1_000, 50, 64).unwrap();
        let a = build_artifact(&data, &g).unwrap();
        assert_eq!(a.checksums.len(), 16);
        assert_eq!(a.checksum(1, 7, 8), fletcher16(&data[500 + 448..1000]));
        assert_eq!(a.checksum(0, 2, 8), fletcher16(&data[128..192]));
        let expected = crate::codec::xor_parity(&[&data[..500], &data[500..]]).unwrap();
        assert_eq!(a.parity, expected);
    }

    #[test]
    fn chunked_build_matches_small_chunks() {
        // blocks straddle the 64 KiB read boundary when cbl does not divide it
        let data = random_bytes(300_000, 2);
        let g = plan_geometry(300_000, 50, 100).unwrap();
        let a = build_artifact(&data, &g).unwrap();
        for (idx, c) in a.checksums.iter().enumerate() {
            let (i, j) = (
                idx as u64 / g.checksum_blocks,
                idx as u64 % g.checksum_blocks,
            );
            let start = g.block_offset(i, j) as usize;
            assert_eq!(
                *c,
                fletcher16(&data[start..start + g.block_len(j) as usize])
            );
        }
    }

    #[test]
    fn identical_blocks_give_zero_parity() {
        let block = random_bytes(333, 3);
        let data: Vec<u8> = block.iter().cycle().take(333 * 4).copied().collect();
        let g = GeometryPlan::new(data.len() as u64, 4, 64).unwrap();
        let a = build_artifact(&data, &g).unwrap();
        assert!(a.parity.iter().all(|&b| b == 0));
    }

    #[test]
    fn single_flip_repaired_in_memory() {
        let original = random_bytes(1_000, 4);
        let g = plan_geometry(1_000, 50, 64).unwrap();
        let a = build_artifact(&original, &g).unwrap();
        let mut data = original.clone();
        flip(&mut data, 8 * 700 + 3);
        let report = recover_buffer(&mut data, &a, &RegenerateOptions::default()).unwrap();
        assert_eq!(report.outcome, Outcome::Repaired);
        assert_eq!(report.corrections_applied, 1);
        assert_eq!(report.corrections[0].block_index, 3);
        assert_eq!(report.corrections[0].offset, 500 + 192);
        assert_eq!(data, original);
    }

    #[test]
    fn same_index_flips_hide_in_parity() {
        let original = random_bytes(1_000, 5);
        let g = plan_geometry(1_000, 50, 64).unwrap();
        let a = build_artifact(&original, &g).unwrap();
        let mut data = original.clone();
        let within = 64 * 2 * 8 + 11;
        flip(&mut data, within);
        flip(&mut data, 500 * 8 + within);
        let corrupted = data.clone();
        let report = recover_buffer(&mut data, &a, &RegenerateOptions::default()).unwrap();
        assert_eq!(report.outcome, Outcome::PartialFailure);
        assert_eq!(report.failed_block_indexes, BTreeSet::from([2]));
        assert_eq!(report.combinations_tried, 0);
        assert_eq!(data, corrupted);
    }

    #[test]
    fn failed_index_vetoes_whole_pairing_group() {
        let original = random_bytes(3_000, 6);
        let g = GeometryPlan::new(3_000, 3, 64).unwrap();
        let a = build_artifact(&original, &g).unwrap();
        let mut data = original.clone();
        // parity blocks 0 and 1 collide at the same bit of block 4; block 2
        // has a lone, otherwise repairable, error in the same group
        let within = 4 * 64 * 8 + 5;
        flip(&mut data, within);
        flip(&mut data, 1000 * 8 + within);
        flip(&mut data, 2000 * 8 + 4 * 64 * 8 + 100);
        let corrupted = data.clone();
        let report = recover_buffer(&mut data, &a, &RegenerateOptions::default()).unwrap();
        assert_eq!(report.failed_block_indexes, BTreeSet::from([4]));
        assert_eq!(report.corrections_found, 1);
        assert_eq!(report.corrections_skipped, 1);
        assert_eq!(report.corrections_applied, 0);
        assert_eq!(data, corrupted);
    }

    #[test]
    fn apply_rules() {
        let c = |j: u64, off: u64| Correction {
            offset: off,
            parity_block: 0,
            block_index: j,
            attempts: 1,
            data: vec![0xee; 2],
        };
        let mut target = vec![0u8; 10];
        let counts = apply_corrections(&[c(1, 0), c(5, 4)], &BTreeSet::new(), &mut target).unwrap();
        assert_eq!(
            counts,
            ApplyCounts {
                applied: 2,
                skipped: 0
            }
        );
        assert_eq!(target, [0xee, 0xee, 0, 0, 0xee, 0xee, 0, 0, 0, 0]);

        let mut target = vec![0u8; 10];
        let counts = apply_corrections(&[c(5, 4)], &BTreeSet::from([5]), &mut target).unwrap();
        assert_eq!(
            counts,
            ApplyCounts {
                applied: 0,
                skipped: 1
            }
        );
        assert!(target.iter().all(|&b| b == 0));

        let counts = apply_corrections(&[], &BTreeSet::new(), &mut target).unwrap();
        assert_eq!(counts, ApplyCounts::default());

        let err =
            apply_corrections(&[c(1, 0), c(2, 9)], &BTreeSet::new(), &mut target).unwrap_err();
        assert!(matches!(
            err,
            Error::PartialWrite {
                applied: 1,
                total: 2,
                ..
            }
        ));
    }

    #[test]
    fn clean_archive_is_clean() {
        let mut data = random_bytes(5_000, 8);
        let g = plan_geometry(5_000, 10, 32).unwrap();
        let a = build_artifact(&data, &g).unwrap();
        let report = recover_buffer(&mut data, &a, &RegenerateOptions::default()).unwrap();
        assert_eq!(report.outcome, Outcome::Clean);
        assert_eq!(report.mismatched_blocks, 0);
        assert_eq!(report.corrections_found, 0);
    }

    #[test]
    fn wrapped_last_block_repaired() {
        let original = random_bytes(1_000, 9);
        let g = plan_geometry(1_000, 50, 64).unwrap();
        let a = build_artifact(&original, &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let mut data = original.clone();
            // last block of parity block 1 covers bytes 948..1000
            let bit = rng.random_range(948 * 8..1000 * 8);
            flip(&mut data, bit);
            let report = recover_buffer(&mut data, &a, &RegenerateOptions::default()).unwrap();
            assert_eq!(report.corrections[0].len(), 52);
            assert_eq!(data, original);
        }
    }
}
