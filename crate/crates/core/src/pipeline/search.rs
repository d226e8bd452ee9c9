//! Error localization and combination search within one checksum block.

use crate::codec::{fletcher16, Checksum16};

/// Default number of combinations tried per block: every subset of up to
/// ten parity-implicated bits (2^10 - 1).
pub const DEFAULT_ATTEMPT_CAP: u64 = 1023;

/// Bit indexes (`byte * 8 + bit`, bit 0 = least significant) at which the
/// first `effective_len` bytes of the two segments differ, ascending.
pub fn locate_bad_bits(computed: &[u8], stored: &[u8], effective_len: usize) -> Vec<usize> {
    let mut bits = Vec::new();
    for (k, (&c, &s)) in computed[..effective_len]
        .iter()
        .zip(&stored[..effective_len])
        .enumerate()
    {
        let diff = c ^ s;
        if diff == 0 {
            continue;
        }
        for l in 0..8 {
            if diff & (1 << l) != 0 {
                bits.push(k * 8 + l);
            }
        }
    }
    bits
}

/// Non-empty subsets of a bit set, largest first; subsets of equal size come
/// in lexicographic order of their ascending index tuples.
///
/// Subsets are produced lazily, so very large sets are fine as long as the
/// consumer stops early.
#[derive(Debug, Clone)]
pub struct Combinations {
    items: Vec<usize>,
    positions: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub fn new(mut items: Vec<usize>) -> Self {
        items.sort_unstable();
        items.dedup();
        let positions = (0..items.len()).collect();
        Combinations {
            done: items.is_empty(),
            items,
            positions,
        }
    }

    fn advance(&mut self) {
        let n = self.items.len();
        let k = self.positions.len();
        // rightmost position that can still move right
        if let Some(r) = (0..k).rev().find(|&r| self.positions[r] < n - k + r) {
            self.positions[r] += 1;
            for t in r + 1..k {
                self.positions[t] = self.positions[t - 1] + 1;
            }
        } else if k > 1 {
            self.positions = (0..k - 1).collect();
        } else {
            self.done = true;
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.positions.iter().map(|&p| self.items[p]).collect();
        self.advance();
        Some(out)
    }
}

/// The first `attempt_cap` subsets of `bad_bits` in search order.
pub fn generate_combinations(
    bad_bits: &[usize],
    attempt_cap: u64,
) -> impl Iterator<Item = Vec<usize>> {
    let cap = usize::try_from(attempt_cap).unwrap_or(usize::MAX);
    Combinations::new(bad_bits.to_vec()).take(cap)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrectionAttempt {
    /// The repaired block, if some combination matched the checksum.
    pub corrected: Option<Vec<u8>>,
    /// Combinations tried, including the matching one.
    pub attempts: u64,
}

/// Flips each candidate combination of `bad_bits` in a fresh copy of
/// `original` until the block checksums to `target`.
pub fn attempt_block_correction(
    original: &[u8],
    bad_bits: &[usize],
    target: Checksum16,
    attempt_cap: u64,
) -> CorrectionAttempt {
    let mut candidate = original.to_vec();
    let mut attempts = 0;
    for combination in generate_combinations(bad_bits, attempt_cap) {
        candidate.copy_from_slice(original);
        for &bit in &combination {
            candidate[bit / 8] ^= 1 << (bit % 8);
        }
        attempts += 1;
        if fletcher16(&candidate) == target {
            return CorrectionAttempt {
                corrected: Some(candidate),
                attempts,
            };
        }
    }
    CorrectionAttempt {
        corrected: None,
        attempts,
    }
}
