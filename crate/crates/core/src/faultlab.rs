//! Seeded fault injection and the recovery benchmark harness.
//!
//! Bit and burst faults flip bits (XOR); zero-region faults overwrite with
//! zeros, as a failed disk sector read back by a disk editor would.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::{self, GenerateOptions, RegenerateOptions, DEFAULT_ATTEMPT_CAP};

/// Overrides the directory benchmark trials create their scratch dirs in.
pub const BENCH_TMPDIR_ENV: &str = "REGEN_BENCH_TMPDIR";

const PLACEMENT_RETRIES: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKind {
    /// `errors` distinct bits flipped anywhere in the file.
    Bit { errors: u64 },
    /// `errors` bits flipped as `bursts` contiguous runs.
    Burst { errors: u64, bursts: u64 },
    /// `length` bytes from `offset` set to zero.
    ZeroRegion { offset: u64, length: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub seed: u64,
}

/// Where a fault landed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Injected {
    Bits(Vec<u64>),
    Bursts(Vec<Burst>),
    Zeroed { offset: u64, length: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Burst {
    pub start_bit: u64,
    pub len: u64,
}

fn flip_bit(data: &mut [u8], bit: u64) {
    data[(bit / 8) as usize] ^= 1 << (bit % 8);
}

/// Flips `n` distinct uniformly chosen bits; returns them ascending.
pub fn inject_bit_errors(data: &mut [u8], n: u64, seed: u64) -> Result<Vec<u64>> {
    let total = data.len() as u64 * 8;
    if n == 0 || n > total {
        return Err(Error::InvalidArgument(format!(
            "cannot flip {n} distinct bits in a {total}-bit file"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bits: Vec<u64> = index::sample(&mut rng, total as usize, n as usize)
        .into_iter()
        .map(|b| b as u64)
        .collect();
    bits.sort_unstable();
    for &b in &bits {
        flip_bit(data, b);
    }
    Ok(bits)
}

/// Flips `n` bits as `b` non-overlapping contiguous runs of `n / b` bits,
/// the last run also taking the `n % b` remainder. Runs are placed
/// uniformly, rejecting overlaps.
pub fn inject_burst_errors(data: &mut [u8], n: u64, b: u64, seed: u64) -> Result<Vec<Burst>> {
    if b == 0 || n < b {
        return Err(Error::InvalidArgument(format!(
            "need at least one bit per burst (n={n}, b={b})"
        )));
    }
    let total = data.len() as u64 * 8;
    if n > total {
        return Err(Error::InvalidArgument(format!(
            "cannot flip {n} bits in a {total}-bit file"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = n / b;
    let mut placed: Vec<Burst> = Vec::with_capacity(b as usize);
    for k in 0..b {
        let len = if k + 1 == b { base + n % b } else { base };
        let mut retries = 0;
        let start = loop {
            let start = rng.random_range(0..=total - len);
            let clear = placed
                .iter()
                .all(|p| start + len <= p.start_bit || p.start_bit + p.len <= start);
            if clear {
                break start;
            }
            retries += 1;
            if retries >= PLACEMENT_RETRIES {
                return Err(Error::PlacementFailure {
                    bursts: b,
                    bits: n,
                    retries,
                });
            }
        };
        placed.push(Burst {
            start_bit: start,
            len,
        });
    }
    for burst in &placed {
        for bit in burst.start_bit..burst.start_bit + burst.len {
            flip_bit(data, bit);
        }
    }
    Ok(placed)
}

pub fn zero_region(data: &mut [u8], offset: u64, length: u64) -> Result<()> {
    let end = offset
        .checked_add(length)
        .filter(|&e| e <= data.len() as u64)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "region {offset}+{length} outside {}-byte file",
                data.len()
            ))
        })?;
    data[offset as usize..end as usize].fill(0);
    Ok(())
}

pub fn inject(data: &mut [u8], spec: &FaultSpec) -> Result<Injected> {
    Ok(match spec.kind {
        FaultKind::Bit { errors } => Injected::Bits(inject_bit_errors(data, errors, spec.seed)?),
        FaultKind::Burst { errors, bursts } => {
            Injected::Bursts(inject_burst_errors(data, errors, bursts, spec.seed)?)
        }
        FaultKind::ZeroRegion { offset, length } => {
            zero_region(data, offset, length)?;
            Injected::Zeroed { offset, length }
        }
    })
}

/// Applies `spec` to the file at `path` in place.
pub fn inject_file(path: &Path, spec: &FaultSpec) -> Result<Injected> {
    let mut data = fs::read(path)?;
    let injected = inject(&mut data, spec)?;
    fs::write(path, &data)?;
    Ok(injected)
}

/// Seeded pseudorandom file contents.
pub fn synthesize(len: usize, seed: u64) -> Vec<u8> {
    let mut data = vec![0u8; len];
    ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut data);
    data
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BenchConfig {
    pub file_size: u64,
    pub parity_percent: u32,
    pub checksum_block_len: u64,
    /// Fault template; its seed is replaced per trial.
    pub fault: FaultKind,
    pub trials: u64,
    pub master_seed: u64,
    pub attempt_cap: u64,
    /// Scratch directory root; falls back to `$REGEN_BENCH_TMPDIR`, then the system temp dir.
    #[serde(skip)]
    pub work_dir: Option<PathBuf>,
}

impl BenchConfig {
    pub fn new(
        file_size: u64,
        parity_percent: u32,
        checksum_block_len: u64,
        fault: FaultKind,
        trials: u64,
    ) -> Self {
        BenchConfig {
            file_size,
            parity_percent,
            checksum_block_len,
            fault,
            trials,
            master_seed: 0x5eed,
            attempt_cap: DEFAULT_ATTEMPT_CAP,
            work_dir: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    /// Content and fault seeds for every trial, drawn from the master seed.
    pub fn trial_seeds(&self) -> Vec<(u64, u64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        (0..self.trials)
            .map(|_| (rng.next_u64(), rng.next_u64()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialOutcome {
    pub success: bool,
    pub combinations_tried: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub config: BenchConfig,
    pub successes: u64,
    pub trials: u64,
    /// `None` when no trial ran.
    pub rate: Option<f64>,
    pub mean_combinations_tried: Option<f64>,
    pub wall_time: Duration,
}

impl BenchResult {
    fn from_outcomes(config: &BenchConfig, outcomes: &[TrialOutcome], wall_time: Duration) -> Self {
        let trials = outcomes.len() as u64;
        let successes = outcomes.iter().filter(|o| o.success).count() as u64;
        let combos: u64 = outcomes.iter().map(|o| o.combinations_tried).sum();
        BenchResult {
            config: config.clone(),
            successes,
            trials,
            rate: (trials > 0).then(|| successes as f64 / trials as f64),
            mean_combinations_tried: (trials > 0).then(|| combos as f64 / trials as f64),
            wall_time,
        }
    }

    pub fn summary(&self) -> String {
        let pct = self
            .rate
            .map_or("n/a".to_string(), |r| format!("{:.0}%", r * 100.0));
        format!(
            "{}/{} recovered ({pct}), mean {:.1} combinations, {:.2?}",
            self.successes,
            self.trials,
            self.mean_combinations_tried.unwrap_or(0.0),
            self.wall_time
        )
    }
}

#[derive(Debug, thiserror::Error)]
#[error("benchmark aborted after {} completed trials: {source}", .partial.trials)]
pub struct BenchError {
    pub partial: Box<BenchResult>,
    #[source]
    pub source: Error,
}

fn scratch_root(config: &BenchConfig) -> PathBuf {
    config
        .work_dir
        .clone()
        .or_else(|| std::env::var_os(BENCH_TMPDIR_ENV).map(PathBuf::from))
        .unwrap_or_else(std::env::temp_dir)
}

/// One trial: synthesize, generate, corrupt a copy, regenerate, verify.
pub fn run_trial(
    config: &BenchConfig,
    content_seed: u64,
    fault_seed: u64,
    root: &Path,
) -> Result<TrialOutcome> {
    let dir = tempfile::Builder::new()
        .prefix("regen-trial")
        .tempdir_in(root)?;
    let archive = dir.path().join("archive.bin");
    let mut data = synthesize(config.file_size as usize, content_seed);
    fs::write(&archive, &data)?;
    pipeline::generate(
        &archive,
        &GenerateOptions {
            parity_percent: config.parity_percent,
            checksum_block_len: config.checksum_block_len,
            overwrite: true,
        },
    )?;
    inject(
        &mut data,
        &FaultSpec {
            kind: config.fault,
            seed: fault_seed,
        },
    )?;
    fs::write(&archive, &data)?;
    let report = pipeline::regenerate(
        &archive,
        &RegenerateOptions {
            attempt_cap: config.attempt_cap,
        },
    )?;
    let success = pipeline::verify(&archive)?.is_match();
    Ok(TrialOutcome {
        success,
        combinations_tried: report.combinations_tried,
    })
}

/// Runs every trial in parallel. Results do not depend on scheduling.
pub fn run_benchmark(config: &BenchConfig) -> std::result::Result<BenchResult, BenchError> {
    let started = Instant::now();
    let root = scratch_root(config);
    let results: Vec<Result<TrialOutcome>> = config
        .trial_seeds()
        .into_par_iter()
        .map(|(content, fault)| run_trial(config, content, fault, &root))
        .collect();

    let mut outcomes = Vec::with_capacity(results.len());
    let mut first_error = None;
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let result = BenchResult::from_outcomes(config, &outcomes, started.elapsed());
    match first_error {
        None => Ok(result),
        Some(source) => Err(BenchError {
            partial: Box::new(result),
            source,
        }),
    }
}

fn human_size(bytes: u64) -> String {
    const UNITS: [(u64, &str); 3] = [(1 << 30, "GB"), (1 << 20, "MB"), (1 << 10, "KB")];
    for (scale, unit) in UNITS {
        if bytes >= scale && bytes.is_multiple_of(scale) {
            return format!("{}{unit}", bytes / scale);
        }
    }
    format!("{bytes}B")
}

pub const CSV_HEADER: &str =
    "data_size,fault,errors_n,bursts_b,parity_percent,checksum_block_len,successes,trials,rate,mean_combinations";

/// CSV with one row per result, columns mirroring the burst/bit benchmark tables.
pub fn results_csv(results: &[BenchResult]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in results {
        let c = &r.config;
        let (fault, n, b) = match c.fault {
            FaultKind::Bit { errors } => ("bit", errors.to_string(), String::new()),
            FaultKind::Burst { errors, bursts } => {
                ("burst", errors.to_string(), bursts.to_string())
            }
            FaultKind::ZeroRegion { length, .. } => {
                ("zero_region", (length * 8).to_string(), String::new())
            }
        };
        let _ = writeln!(
            out,
            "{},{fault},{n},{b},{},{},{},{},{},{}",
            human_size(c.file_size),
            c.parity_percent,
            c.checksum_block_len,
            r.successes,
            r.trials,
            r.rate.map_or(String::new(), |x| format!("{x:.4}")),
            r.mean_combinations_tried
                .map_or(String::new(), |x| format!("{x:.2}")),
        );
    }
    out
}
