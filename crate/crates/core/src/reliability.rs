//! Analytical reliability model for checksum + parity recovery.
//!
//! For `n` uniformly scattered bit errors in `d` data bits protected by `p`
//! parity blocks, `c` checksum blocks and a `q`-bit checksum:
//!
//! * checksum collision: `n * (2^(n*p/c) - 1) / 2^q`, the per-block
//!   combination count over the checksum space scaled by the error count;
//! * parity collision: `1 - prod_{i<n} (1 - i/M)`, the chance that two
//!   errors share a parity bit, with `M` the number of parity bit positions;
//! * recovery: `1 - checksum collision - parity collision`.
//!
//! The model overestimates real recovery rates: Fletcher-16 is weaker than a
//! uniform 16-bit hash and real errors are not uniformly spread.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

pub const OVERESTIMATE_CAVEAT: &str = "note: the model is an overestimate; real checksums are \
     weaker than uniform and real errors are not uniformly distributed";

/// `(2^n - 1) / 2^q`: the chance that one of the `2^n - 1` non-empty flip
/// combinations of `n` suspect bits collides with a `q`-bit checksum.
pub fn collision_probability(n: u32, q: u32) -> f64 {
    // exact for n <= 53: the numerator is an integer and the division is by a power of two
    ((n as f64).exp2() - 1.0) / (q as f64).exp2()
}

/// How the parity collision product's denominator `M` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParityDenominator {
    /// `M = d / p`: bit length of one parity block, i.e. the number of
    /// distinct parity bit positions errors can land on.
    #[default]
    BlockBits,
    /// `M = p`, the parity block count taken literally.
    BlockCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReliabilityParams {
    pub data_bits: u64,
    pub parity_blocks: u64,
    pub checksum_blocks: u64,
    pub checksum_bits: u32,
    pub bit_errors: u64,
}

impl ReliabilityParams {
    pub fn validate(&self) -> Result<()> {
        if self.data_bits == 0 || self.parity_blocks == 0 || self.checksum_blocks == 0 {
            return Err(Error::InvalidArgument(
                "data bits, parity blocks and checksum blocks must be positive".into(),
            ));
        }
        if !matches!(self.checksum_bits, 8 | 16 | 32) {
            return Err(Error::InvalidArgument(format!(
                "checksum width {} not one of 8, 16, 32",
                self.checksum_bits
            )));
        }
        if self.parity_blocks > self.data_bits {
            return Err(Error::InvalidArgument(
                "more parity blocks than data bits".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    /// Unclamped model terms.
    pub raw_checksum_collision: f64,
    pub raw_parity_collision: f64,
    pub raw_recovery: f64,
    /// The parity product reached a zero or negative factor.
    pub parity_saturated: bool,
}

impl Prediction {
    pub fn checksum_collision(&self) -> f64 {
        self.raw_checksum_collision.clamp(0.0, 1.0)
    }

    pub fn parity_collision(&self) -> f64 {
        self.raw_parity_collision.clamp(0.0, 1.0)
    }

    pub fn recovery(&self) -> f64 {
        self.raw_recovery.clamp(0.0, 1.0)
    }
}

/// `prod_{i<n} (1 - i/m)`, summed in log space. Returns `(product, saturated)`;
/// a factor at or below zero saturates the product to zero.
pub fn no_collision_product(n: u64, m: f64) -> (f64, bool) {
    if n as f64 > m {
        return (0.0, true);
    }
    let mut log_sum = 0.0f64;
    let mut compensation = 0.0f64;
    for i in 0..n {
        let term = (-(i as f64) / m).ln_1p();
        if term == f64::NEG_INFINITY {
            return (0.0, true);
        }
        // Neumaier summation
        let t = log_sum + term;
        if log_sum.abs() >= term.abs() {
            compensation += (log_sum - t) + term;
        } else {
            compensation += (term - t) + log_sum;
        }
        log_sum = t;
    }
    ((log_sum + compensation).exp(), false)
}

pub fn predict_reliability(
    params: &ReliabilityParams,
    denominator: ParityDenominator,
) -> Result<Prediction> {
    params.validate()?;
    let n = params.bit_errors as f64;
    let p = params.parity_blocks as f64;
    let c = params.checksum_blocks as f64;
    let q = params.checksum_bits as f64;

    let per_block = n * p / c;
    let checksum = (per_block.exp2() - 1.0) / q.exp2() * n;

    let m = match denominator {
        ParityDenominator::BlockBits => (params.data_bits / params.parity_blocks) as f64,
        ParityDenominator::BlockCount => p,
    };
    let (product, parity_saturated) = no_collision_product(params.bit_errors, m);
    let parity = 1.0 - product;

    Ok(Prediction {
        raw_checksum_collision: checksum,
        raw_parity_collision: parity,
        raw_recovery: 1.0 - checksum - parity,
        parity_saturated,
    })
}

/// Redundant data size in bits: `q*c + floor(d/p)`.
pub fn redundant_size(
    data_bits: u64,
    parity_blocks: u64,
    checksum_blocks: u64,
    checksum_bits: u32,
) -> u64 {
    u64::from(checksum_bits) * checksum_blocks + data_bits / parity_blocks
}

// ---- table emission ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Text,
}

/// `(n, q)` rows of the collision table.
pub const COLLISION_ROWS: [(u32, u32); 9] = [
    (5, 8),
    (5, 16),
    (10, 16),
    (15, 16),
    (15, 32),
    (20, 32),
    (25, 32),
    (26, 32),
    (30, 32),
];

/// One megabyte of data, a 16-bit checksum and 1000 bit errors, across
/// 50/20/10/5% parity and 64/128-byte checksum blocks.
pub fn reference_grid() -> Vec<ReliabilityParams> {
    let mut rows = Vec::new();
    for p in [2, 5, 10, 20] {
        for c in [15_625, 7_813] {
            rows.push(ReliabilityParams {
                data_bits: 8_000_000,
                parity_blocks: p,
                checksum_blocks: c,
                checksum_bits: 16,
                bit_errors: 1_000,
            });
        }
    }
    rows
}

/// Probability printed to 16 decimals with trailing zeros dropped.
pub fn format_probability(w: f64) -> String {
    let s = format!("{w:.16}");
    let s = s.trim_end_matches('0');
    s.strip_suffix('.').unwrap_or(s).to_string()
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn render(&self, format: TableFormat) -> String {
        let mut out = String::new();
        match format {
            TableFormat::Csv => {
                out.push_str(&self.header.join(","));
                out.push('\n');
                for row in &self.rows {
                    out.push_str(&row.join(","));
                    out.push('\n');
                }
            }
            TableFormat::Text => {
                let widths: Vec<usize> = (0..self.header.len())
                    .map(|k| {
                        self.rows
                            .iter()
                            .map(|r| r[k].len())
                            .chain([self.header[k].len()])
                            .max()
                            .unwrap_or(0)
                    })
                    .collect();
                let line = |cells: &mut dyn Iterator<Item = &str>, out: &mut String| {
                    let padded: Vec<String> = cells
                        .zip(&widths)
                        .map(|(c, w)| format!("{c:>w$}"))
                        .collect();
                    let _ = writeln!(out, "{}", padded.join("  ").trim_end());
                };
                line(&mut self.header.iter().copied(), &mut out);
                for row in &self.rows {
                    line(&mut row.iter().map(String::as_str), &mut out);
                }
            }
        }
        out
    }
}

pub fn collision_table(rows: &[(u32, u32)], format: TableFormat) -> String {
    Table {
        header: vec![
            "bit_errors_n",
            "checksum_bits_q",
            "combination_set_size",
            "collision_probability_w",
        ],
        rows: rows
            .iter()
            .map(|&(n, q)| {
                vec![
                    n.to_string(),
                    q.to_string(),
                    ((1u64 << n) - 1).to_string(),
                    format_probability(collision_probability(n, q)),
                ]
            })
            .collect(),
    }
    .render(format)
}

pub fn reliability_table(
    rows: &[ReliabilityParams],
    denominator: ParityDenominator,
    format: TableFormat,
) -> Result<String> {
    let mut cells = Vec::with_capacity(rows.len());
    for r in rows {
        let prediction = predict_reliability(r, denominator)?;
        cells.push(vec![
            r.data_bits.to_string(),
            r.parity_blocks.to_string(),
            r.checksum_blocks.to_string(),
            r.checksum_bits.to_string(),
            r.bit_errors.to_string(),
            format!("{:.7}", prediction.recovery()),
        ]);
    }
    Ok(Table {
        header: vec![
            "data_bits_d",
            "parity_blocks_p",
            "checksum_blocks_c",
            "checksum_bits_q",
            "bit_errors_n",
            "reliability",
        ],
        rows: cells,
    }
    .render(format))
}

pub fn redundancy_table(rows: &[ReliabilityParams], format: TableFormat) -> String {
    Table {
        header: vec![
            "data_bits_d",
            "parity_blocks_p",
            "checksum_blocks_c",
            "checksum_bits_q",
            "redundant_bits",
        ],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.data_bits.to_string(),
                    r.parity_blocks.to_string(),
                    r.checksum_blocks.to_string(),
                    r.checksum_bits.to_string(),
                    redundant_size(
                        r.data_bits,
                        r.parity_blocks,
                        r.checksum_blocks,
                        r.checksum_bits,
                    )
                    .to_string(),
                ]
            })
            .collect(),
    }
    .render(format)
}
