//! Command-line front end. Every subcommand is a thin wrapper over the
//! library; `run` returns the process exit status instead of exiting so it
//! can be driven from tests.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::codec::RECOMMENDED_MAX_BLOCK_LEN;
use crate::error::Error;
use crate::faultlab::{self, BenchConfig, FaultKind};
use crate::pipeline::{
    self, GenerateOptions, Outcome, RegenerateOptions, Verification, DEFAULT_ATTEMPT_CAP,
};
use crate::reliability::{self, ParityDenominator, ReliabilityParams, TableFormat};

/// Upper bound on `--max-attempts`.
pub const MAX_ATTEMPT_CAP: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExitStatus(pub i32);

impl ExitStatus {
    pub const SUCCESS: ExitStatus = ExitStatus(0);
    /// Verification mismatch or partial recovery.
    pub const FAILURE: ExitStatus = ExitStatus(1);
    pub const USAGE: ExitStatus = ExitStatus(2);
    /// I/O or file format error.
    pub const IO: ExitStatus = ExitStatus(3);

    pub fn for_error(err: &Error) -> ExitStatus {
        match err {
            Error::InvalidArgument(_) | Error::FileTooSmall { .. } | Error::OutputExists(_) => {
                ExitStatus::USAGE
            }
            _ => ExitStatus::IO,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "regen",
    version,
    about = "Partial redundancy for archive files"
)]
pub struct Cli {
    /// Print machine-readable JSON instead of the human summary.
    #[arg(long, global = true, conflicts_with = "quiet")]
    pub json: bool,
    /// Print nothing; rely on the exit status.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write FILE.sha256 and FILE.regen
    Generate {
        file: PathBuf,
        /// Parity data as a percentage of the archive size
        #[arg(long, short, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..=100))]
        parity: u32,
        /// Checksum block length in bytes (128 is a better fit for archives of 1 GB and up)
        #[arg(long, short, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..=65535))]
        block: u64,
        /// Overwrite existing outputs
        #[arg(long, short)]
        force: bool,
    },
    /// Check FILE against FILE.sha256
    Verify { file: PathBuf },
    /// Repair FILE in place from FILE.regen
    Regenerate {
        file: PathBuf,
        /// Bit combinations tried per damaged checksum block
        #[arg(long, default_value_t = DEFAULT_ATTEMPT_CAP, value_parser = clap::value_parser!(u64).range(1..=MAX_ATTEMPT_CAP))]
        max_attempts: u64,
    },
    /// Predict recovery probability, or print the model tables
    Predict(PredictArgs),
    /// Run a seeded fault-injection recovery benchmark
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Denominator {
    /// Parity block length in bits (d / p)
    BlockBits,
    /// Parity block count (p)
    BlockCount,
}

impl From<Denominator> for ParityDenominator {
    fn from(d: Denominator) -> Self {
        match d {
            Denominator::BlockBits => ParityDenominator::BlockBits,
            Denominator::BlockCount => ParityDenominator::BlockCount,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableChoice {
    Collision,
    Reliability,
    Redundancy,
    All,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Data size in bits (d)
    #[arg(long, short = 'd', required_unless_present = "table")]
    pub data_bits: Option<u64>,
    /// Parity block count (p)
    #[arg(long, short = 'p', required_unless_present = "table")]
    pub parity_blocks: Option<u64>,
    /// Total checksum block count (c)
    #[arg(long, short = 'c', required_unless_present = "table")]
    pub checksum_blocks: Option<u64>,
    /// Checksum width in bits (q)
    #[arg(long, short = 'q', default_value_t = 16)]
    pub checksum_bits: u32,
    /// Bit error count (n)
    #[arg(long, short = 'n', required_unless_present = "table")]
    pub bit_errors: Option<u64>,
    #[arg(long, value_enum, default_value_t = Denominator::BlockBits)]
    pub denominator: Denominator,
    /// Print a reference table instead of a single prediction
    #[arg(long, value_enum)]
    pub table: Option<TableChoice>,
    /// Emit tables as CSV
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultChoice {
    Bit,
    Burst,
    Zero,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Synthetic archive size in bytes
    #[arg(long, default_value_t = 1 << 20)]
    pub size: u64,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..=100))]
    pub parity: u32,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..=65535))]
    pub block: u64,
    #[arg(long, value_enum, default_value_t = FaultChoice::Bit)]
    pub fault: FaultChoice,
    /// Bit errors (bit and burst faults)
    #[arg(long, short = 'n', default_value_t = 1000)]
    pub errors: u64,
    /// Burst count (burst faults)
    #[arg(long, short = 'b', default_value_t = 10)]
    pub bursts: u64,
    /// Region start in bytes (zero faults)
    #[arg(long, default_value_t = 0)]
    pub offset: u64,
    /// Region length in bytes (zero faults)
    #[arg(long, default_value_t = 4096)]
    pub length: u64,
    #[arg(long, default_value_t = 100)]
    pub trials: u64,
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_ATTEMPT_CAP, value_parser = clap::value_parser!(u64).range(1..=MAX_ATTEMPT_CAP))]
    pub max_attempts: u64,
    /// Emit the result as CSV
    #[arg(long)]
    pub csv: bool,
}

struct Output<'a> {
    json: bool,
    quiet: bool,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Output<'_> {
    fn emit<T: Serialize>(&mut self, value: &T, human: impl FnOnce() -> String) {
        if self.quiet {
            return;
        }
        let text = if self.json {
            serde_json::to_string_pretty(value).unwrap_or_default()
        } else {
            human()
        };
        let _ = writeln!(self.out, "{}", text.trim_end());
    }

    fn warn(&mut self, msg: &str) {
        if !self.quiet {
            let _ = writeln!(self.err, "warning: {msg}");
        }
    }

    fn error(&mut self, err: &dyn std::fmt::Display) {
        let _ = writeln!(self.err, "error: {err}");
    }
}

/// Parses `args` and runs the command, writing to the given streams.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
            } else {
                let _ = write!(out, "{rendered}");
            }
            return ExitStatus(code);
        }
    };
    let mut output = Output {
        json: cli.json,
        quiet: cli.quiet,
        out,
        err,
    };
    match execute(cli.command, &mut output) {
        Ok(status) => status,
        Err(e) => {
            output.error(&e);
            ExitStatus::for_error(&e)
        }
    }
}

fn execute(command: Command, out: &mut Output<'_>) -> Result<ExitStatus, Error> {
    match command {
        Command::Generate {
            file,
            parity,
            block,
            force,
        } => {
            if block as usize > RECOMMENDED_MAX_BLOCK_LEN {
                out.warn(&format!(
                    "checksum blocks over {RECOMMENDED_MAX_BLOCK_LEN} bytes weaken Fletcher-16 error detection"
                ));
            }
            let summary = pipeline::generate(
                &file,
                &GenerateOptions {
                    parity_percent: parity,
                    checksum_block_len: block,
                    overwrite: force,
                },
            )?;
            out.emit(&summary, || {
                let g = &summary.geometry;
                format!(
                    "wrote {} and {} ({} bytes)\n{} parity blocks of {} bytes, {} checksum blocks each, {} tail bytes unprotected",
                    summary.sidecar_path.display(),
                    summary.regen_path.display(),
                    summary.regen_len,
                    g.parity_blocks,
                    g.parity_block_len,
                    g.checksum_blocks,
                    g.tail_len,
                )
            });
            Ok(ExitStatus::SUCCESS)
        }
        Command::Verify { file } => {
            let v = pipeline::verify(&file)?;
            out.emit(&v, || match &v {
                Verification::Match { .. } => format!("{}: ok", file.display()),
                Verification::Mismatch { expected, actual } => format!(
                    "{}: corrupt\n  expected {expected}\n  actual   {actual}\nrun `regen regenerate` to attempt recovery",
                    file.display()
                ),
            });
            Ok(if v.is_match() {
                ExitStatus::SUCCESS
            } else {
                ExitStatus::FAILURE
            })
        }
        Command::Regenerate { file, max_attempts } => {
            let report = pipeline::regenerate(
                &file,
                &RegenerateOptions {
                    attempt_cap: max_attempts,
                },
            )?;
            out.emit(&report, || {
                let headline = match report.outcome {
                    Outcome::Clean => "no damaged checksum blocks found".to_string(),
                    Outcome::Repaired => "archive repaired".to_string(),
                    Outcome::PartialFailure => "recovery incomplete".to_string(),
                };
                let digest = match report.digest_match {
                    Some(true) => "digest matches",
                    Some(false) => "digest does not match",
                    None => "no sidecar to check",
                };
                let mut text = format!(
                    "{headline} ({digest})\n{} damaged blocks, {} corrections found, {} applied, {} skipped, {} combinations tried",
                    report.mismatched_blocks,
                    report.corrections_found,
                    report.corrections_applied,
                    report.corrections_skipped,
                    report.combinations_tried,
                );
                if !report.failed_block_indexes.is_empty() {
                    let idx: Vec<String> = report.failed_block_indexes.iter().map(u64::to_string).collect();
                    text.push_str(&format!("\nfailed checksum block indexes: {}", idx.join(", ")));
                }
                text
            });
            Ok(match report.outcome {
                Outcome::PartialFailure => ExitStatus::FAILURE,
                _ => ExitStatus::SUCCESS,
            })
        }
        Command::Predict(args) => predict(args, out),
        Command::Bench(args) => bench(args, out),
    }
}

fn predict(args: PredictArgs, out: &mut Output<'_>) -> Result<ExitStatus, Error> {
    let denominator = ParityDenominator::from(args.denominator);
    if let Some(table) = args.table {
        let format = if args.csv {
            TableFormat::Csv
        } else {
            TableFormat::Text
        };
        let grid = reliability::reference_grid();
        let mut sections = Vec::new();
        if matches!(table, TableChoice::Collision | TableChoice::All) {
            sections.push(reliability::collision_table(
                &reliability::COLLISION_ROWS,
                format,
            ));
        }
        if matches!(table, TableChoice::Reliability | TableChoice::All) {
            sections.push(reliability::reliability_table(&grid, denominator, format)?);
        }
        if matches!(table, TableChoice::Redundancy | TableChoice::All) {
            sections.push(reliability::redundancy_table(&grid, format));
        }
        if !out.quiet {
            let _ = write!(out.out, "{}", sections.join("\n"));
        }
        return Ok(ExitStatus::SUCCESS);
    }

    let params = ReliabilityParams {
        data_bits: args.data_bits.unwrap_or_default(),
        parity_blocks: args.parity_blocks.unwrap_or_default(),
        checksum_blocks: args.checksum_blocks.unwrap_or_default(),
        checksum_bits: args.checksum_bits,
        bit_errors: args.bit_errors.unwrap_or_default(),
    };
    let prediction = reliability::predict_reliability(&params, denominator)?;

    #[derive(Serialize)]
    struct Report {
        params: ReliabilityParams,
        denominator: ParityDenominator,
        checksum_collision: f64,
        parity_collision: f64,
        recovery: f64,
        raw: reliability::Prediction,
        redundant_bits: u64,
    }
    let report = Report {
        params,
        denominator,
        checksum_collision: prediction.checksum_collision(),
        parity_collision: prediction.parity_collision(),
        recovery: prediction.recovery(),
        raw: prediction,
        redundant_bits: reliability::redundant_size(
            params.data_bits,
            params.parity_blocks,
            params.checksum_blocks,
            params.checksum_bits,
        ),
    };
    out.emit(&report, || {
        let mut text = format!(
            "recovery probability {:.7}\n  checksum collision {:.7}\n  parity collision   {:.7}\n  redundant data     {} bits",
            report.recovery, report.checksum_collision, report.parity_collision, report.redundant_bits
        );
        if prediction.parity_saturated {
            text.push_str("\n  parity collision saturated (more errors than parity positions)");
        }
        text.push('\n');
        text.push_str(reliability::OVERESTIMATE_CAVEAT);
        text
    });
    Ok(ExitStatus::SUCCESS)
}

fn bench(args: BenchArgs, out: &mut Output<'_>) -> Result<ExitStatus, Error> {
    let fault = match args.fault {
        FaultChoice::Bit => FaultKind::Bit {
            errors: args.errors,
        },
        FaultChoice::Burst => FaultKind::Burst {
            errors: args.errors,
            bursts: args.bursts,
        },
        FaultChoice::Zero => FaultKind::ZeroRegion {
            offset: args.offset,
            length: args.length,
        },
    };
    let mut config = BenchConfig::new(args.size, args.parity, args.block, fault, args.trials)
        .with_seed(args.seed);
    config.attempt_cap = args.max_attempts;
    let result = match faultlab::run_benchmark(&config) {
        Ok(r) => r,
        Err(e) => {
            out.error(&format!("partial result: {}", e.partial.summary()));
            return Err(e.source);
        }
    };
    if args.csv {
        if !out.quiet {
            let _ = write!(
                out.out,
                "{}",
                faultlab::results_csv(std::slice::from_ref(&result))
            );
        }
    } else {
        out.emit(&result, || result.summary());
    }
    Ok(ExitStatus::SUCCESS)
}
