//! Block layout of an archive.
//!
//! The archive is cut into `parity_blocks` equal slices of `parity_block_len`
//! bytes; the `tail_len` bytes left over are not covered by parity or
//! checksums. Each slice is in turn cut into `checksum_blocks` runs of
//! `checksum_block_len` bytes, the last of which is wrapped at the slice
//! boundary and may be shorter.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GeometryPlan {
    pub file_size: u64,
    pub parity_blocks: u64,
    pub parity_block_len: u64,
    pub checksum_block_len: u64,
    /// Checksum blocks per parity block.
    pub checksum_blocks: u64,
    pub last_checksum_block_len: u64,
    pub tail_len: u64,
}

/// `round(100 / percent)`, halves rounded away from zero.
pub fn parity_blocks_for_percent(parity_percent: u32) -> Result<u64> {
    if !(1..=100).contains(&parity_percent) {
        return Err(Error::InvalidArgument(format!(
            "parity percentage {parity_percent} outside 1..=100"
        )));
    }
    let p = u64::from(parity_percent);
    Ok((200 + p) / (2 * p))
}

/// Plans the layout for `file_size` bytes at `parity_percent` redundancy.
pub fn plan_geometry(
    file_size: u64,
    parity_percent: u32,
    checksum_block_len: u64,
) -> Result<GeometryPlan> {
    let pb = parity_blocks_for_percent(parity_percent)?;
    GeometryPlan::new(file_size, pb, checksum_block_len)
}

impl GeometryPlan {
    /// Layout from an explicit parity block count, as recorded in a regen header.
    pub fn new(file_size: u64, parity_blocks: u64, checksum_block_len: u64) -> Result<Self> {
        if parity_blocks == 0 || parity_blocks > u64::from(u16::MAX) {
            return Err(Error::InvalidArgument(format!(
                "parity block count {parity_blocks} outside 1..=65535"
            )));
        }
        if checksum_block_len == 0 || checksum_block_len > u64::from(u16::MAX) {
            return Err(Error::InvalidArgument(format!(
                "checksum block length {checksum_block_len} outside 1..=65535"
            )));
        }
        let parity_block_len = file_size / parity_blocks;
        if parity_block_len == 0 {
            return Err(Error::FileTooSmall {
                file_size,
                parity_blocks,
            });
        }
        let checksum_blocks = parity_block_len.div_ceil(checksum_block_len);
        Ok(GeometryPlan {
            file_size,
            parity_blocks,
            parity_block_len,
            checksum_block_len,
            checksum_blocks,
            last_checksum_block_len: parity_block_len - (checksum_blocks - 1) * checksum_block_len,
            tail_len: file_size - parity_blocks * parity_block_len,
        })
    }

    /// Bytes covered by parity and checksums.
    pub fn protected_len(&self) -> u64 {
        self.parity_blocks * self.parity_block_len
    }

    pub fn total_checksum_blocks(&self) -> u64 {
        self.parity_blocks * self.checksum_blocks
    }

    /// Length of checksum block `j`: `last_checksum_block_len` for the last one.
    pub fn block_len(&self, j: u64) -> u64 {
        if j + 1 == self.checksum_blocks {
            self.last_checksum_block_len
        } else {
            self.checksum_block_len
        }
    }

    /// Archive offset of checksum block `j` in parity block `i`.
    pub fn block_offset(&self, i: u64, j: u64) -> u64 {
        i * self.parity_block_len + j * self.checksum_block_len
    }

    /// Size in bytes of the matching regen file: header, checksum table, parity.
    pub fn regen_file_len(&self) -> u64 {
        crate::format::HEADER_LEN as u64 + 2 * self.total_checksum_blocks() + self.parity_block_len
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_mebibyte_ten_percent() {
        let g = plan_geometry(1_048_576, 10, 64).unwrap();
        assert_eq!(g.parity_blocks, 10);
        assert_eq!(g.parity_block_len, 104_857);
        assert_eq!(g.checksum_blocks, 1_639);
        assert_eq!(g.last_checksum_block_len, 25);
        assert_eq!(g.tail_len, 6);
        assert_eq!(g.regen_file_len(), 137_648);
    }

    #[test]
    fn thousand_bytes_half_parity() {
        let g = plan_geometry(1_000, 50, 64).unwrap();
        assert_eq!(
            (g.parity_blocks, g.parity_block_len, g.checksum_blocks),
            (2, 500, 8)
        );
        assert_eq!((g.last_checksum_block_len, g.tail_len), (52, 0));
    }

    #[test]
    fn mirror_layout() {
        let g = plan_geometry(100, 100, 16).unwrap();
        assert_eq!((g.parity_blocks, g.parity_block_len), (1, 100));
        assert_eq!(g.checksum_blocks, 7);
        assert_eq!(g.last_checksum_block_len, 4);
    }

    #[test]
    fn rounding_half_away_from_zero() {
        let expect = [
            (3, 33),
            (5, 20),
            (8, 13),
            (10, 10),
            (40, 3),
            (50, 2),
            (67, 1),
            (100, 1),
        ];
        for (pct, pb) in expect {
            assert_eq!(parity_blocks_for_percent(pct).unwrap(), pb, "{pct}%");
            assert_eq!(
                parity_blocks_for_percent(pct).unwrap(),
                (100.0 / pct as f64).round() as u64
            );
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            plan_geometry(10, 5, 64),
            Err(Error::FileTooSmall {
                file_size: 10,
                parity_blocks: 20
            })
        ));
        assert!(matches!(
            plan_geometry(1000, 0, 64),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            plan_geometry(1000, 101, 64),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            plan_geometry(1000, 10, 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            plan_geometry(1000, 10, 65_536),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            plan_geometry(0, 10, 64),
            Err(Error::FileTooSmall { .. })
        ));
    }

    proptest! {
        #[test]
        fn layout_invariants(size in 1u64..50_000_000, pct in 1u32..=100, cbl in 1u64..=4096) {
            match plan_geometry(size, pct, cbl) {
                Ok(g) => {
                    prop_assert_eq!(g.parity_blocks * g.parity_block_len + g.tail_len, size);
                    prop_assert!(g.tail_len < g.parity_blocks);
                    prop_assert_eq!(
                        (g.checksum_blocks - 1) * g.checksum_block_len + g.last_checksum_block_len,
                        g.parity_block_len
                    );
                    prop_assert!(g.last_checksum_block_len >= 1 && g.last_checksum_block_len <= cbl);
                    // regenerate rebuilds the plan from the header fields alone
                    prop_assert_eq!(GeometryPlan::new(size, g.parity_blocks, cbl).unwrap(), g);
                }
                Err(Error::FileTooSmall { .. }) => {
                    prop_assert!(size < parity_blocks_for_percent(pct).unwrap());
                }
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }
}
