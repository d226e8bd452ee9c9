//! Byte-level primitives: Fletcher-16, XOR parity and SHA-256.

use std::fmt;
use std::io::{self, Read};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Checksum block lengths above this degrade Fletcher-16 error detection.
pub const RECOMMENDED_MAX_BLOCK_LEN: usize = 256;

/// A Fletcher-16 checksum value: `s2 << 8 | s1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Checksum16(pub u16);

impl Checksum16 {
    pub fn to_be_bytes(self) -> [u8; 2] {
        self.0.to_be_bytes()
    }

    pub fn from_be_bytes(bytes: [u8; 2]) -> Self {
        Checksum16(u16::from_be_bytes(bytes))
    }

    /// Low byte, the running sum of the data bytes.
    pub fn sum1(self) -> u8 {
        (self.0 & 0xff) as u8
    }

    /// High byte, the running sum of sums.
    pub fn sum2(self) -> u8 {
        (self.0 >> 8) as u8
    }
}

impl fmt::Display for Checksum16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04x}", self.0)
    }
}

/// Streaming Fletcher-16 (modulus 255, both sums start at zero).
#[derive(Debug, Clone, Default)]
pub struct Fletcher16 {
    sum1: u32,
    sum2: u32,
}

impl Fletcher16 {
    // Largest run of bytes that cannot overflow the u32 sums between
    // reductions, starting from reduced sums (< 255).
    const MAX_RUN: usize = 5802;

    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, data: &[u8]) {
        let mut s1 = self.sum1;
        let mut s2 = self.sum2;
        for run in data.chunks(Self::MAX_RUN) {
            for &b in run {
                s1 += u32::from(b);
                s2 += s1;
            }
            s1 %= 255;
            s2 %= 255;
        }
        self.sum1 = s1;
        self.sum2 = s2;
    }

    pub fn finish(&self) -> Checksum16 {
        Checksum16(((self.sum2 << 8) | self.sum1) as u16)
    }
}

pub fn fletcher16(data: &[u8]) -> Checksum16 {
    let mut f = Fletcher16::new();
    f.update(data);
    f.finish()
}

/// XOR `src` into `acc` byte by byte. Both slices must have the same length.
pub fn xor_into(acc: &mut [u8], src: &[u8]) {
    debug_assert_eq!(acc.len(), src.len());
    for (a, s) in acc.iter_mut().zip(src) {
        *a ^= *s;
    }
}

/// Bitwise XOR of equal-length blocks.
pub fn xor_parity<B: AsRef<[u8]>>(blocks: &[B]) -> Result<Vec<u8>> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::InvalidArgument("xor parity needs at least one block".into()))?
        .as_ref();
    let mut out = first.to_vec();
    for (k, block) in blocks.iter().enumerate().skip(1) {
        let block = block.as_ref();
        if block.len() != out.len() {
            return Err(Error::InvalidArgument(format!(
                "block {k} is {} bytes, expected {}",
                block.len(),
                out.len()
            )));
        }
        xor_into(&mut out, block);
    }
    Ok(out)
}

/// Lowercase hex SHA-256 of everything readable from `reader`.
pub fn sha256_hex<R: Read>(mut reader: R) -> io::Result<String> {
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = match reader.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(data: &[u8]) -> u16 {
        let (mut s1, mut s2) = (0u16, 0u16);
        for &b in data {
            s1 = (s1 + u16::from(b)) % 255;
            s2 = (s2 + s1) % 255;
        }
        (s2 << 8) | s1
    }

    #[test]
    fn fletcher_golden_values() {
        assert_eq!(fletcher16(&[]), Checksum16(0));
        assert_eq!(fletcher16(&[0u8; 64]), Checksum16(0));
        // s1 = 195, s2 = (97 + 195) mod 255 = 37
        assert_eq!(fletcher16(b"ab"), Checksum16(0x25c3));
        assert_eq!(fletcher16(b"abcde"), Checksum16(0xc8f0));
        assert_eq!(fletcher16(b"abcdef"), Checksum16(0x2057));
        assert_eq!(fletcher16(b"abcdefgh"), Checksum16(0x0627));
    }

    #[test]
    fn fletcher_long_run_of_ff() {
        // 0xff is congruent to 0 mod 255, so the sums never move.
        let data = vec![0xffu8; 100_000];
        assert_eq!(fletcher16(&data).0, naive(&data));
        assert_eq!(fletcher16(&data), Checksum16(0));
    }

    #[test]
    fn checksum_big_endian() {
        assert_eq!(Checksum16(0xc8f0).to_be_bytes(), [0xc8, 0xf0]);
        assert_eq!(Checksum16::from_be_bytes([0x25, 0xc3]), Checksum16(0x25c3));
    }

    #[test]
    fn xor_examples() {
        assert_eq!(
            xor_parity(&[[1u8, 2, 3], [1, 2, 3]]).unwrap(),
            vec![0, 0, 0]
        );
        assert_eq!(xor_parity(&[[0xffu8], [0x0f], [0x01]]).unwrap(), vec![0xf1]);
        assert_eq!(xor_parity(&[[9u8, 8, 7]]).unwrap(), vec![9, 8, 7]);
    }

    #[test]
    fn xor_rejects_ragged_and_empty() {
        let blocks: Vec<Vec<u8>> = vec![vec![1, 2], vec![3]];
        assert!(matches!(
            xor_parity(&blocks),
            Err(Error::InvalidArgument(_))
        ));
        let none: Vec<Vec<u8>> = Vec::new();
        assert!(matches!(xor_parity(&none), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn sha256_empty_and_avalanche() {
        assert_eq!(
            sha256_hex(&[][..]).unwrap(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            sha256_hex(&b"hello world"[..]).unwrap(),
            "b94d27b9934d3e08a52e52d7da7dabfac484efe37a5380ee9088f7ace2efcde9"
        );
        let a = vec![0x5au8; 4096];
        let mut b = a.clone();
        b[1000] ^= 0x10;
        assert_eq!(sha256_hex(&a[..]).unwrap(), sha256_hex(&a[..]).unwrap());
        assert_ne!(sha256_hex(&a[..]).unwrap(), sha256_hex(&b[..]).unwrap());
    }

    proptest! {
        #[test]
        fn fletcher_matches_naive(data in proptest::collection::vec(any::<u8>(), 0..20_000)) {
            let c = fletcher16(&data);
            prop_assert_eq!(c.0, naive(&data));
            prop_assert!(c.sum1() < 255 && c.sum2() < 255);
        }

        #[test]
        fn fletcher_chunking_invariant(
            data in proptest::collection::vec(any::<u8>(), 0..8_000),
            cuts in proptest::collection::vec(any::<usize>(), 0..12),
        ) {
            let mut cuts: Vec<usize> = cuts.into_iter().map(|c| c % (data.len() + 1)).collect();
            cuts.sort_unstable();
            let mut f = Fletcher16::new();
            let mut start = 0;
            for cut in cuts.into_iter().chain(std::iter::once(data.len())) {
                f.update(&data[start..cut]);
                start = cut;
            }
            prop_assert_eq!(f.finish(), fletcher16(&data));
        }

        #[test]
        fn xor_order_independent_and_self_inverse(
            blocks in (1usize..40).prop_flat_map(|len| {
                proptest::collection::vec(proptest::collection::vec(any::<u8>(), len), 1..8)
            }),
            seed in any::<u64>(),
        ) {
            let parity = xor_parity(&blocks).unwrap();
            let mut shuffled = blocks.clone();
            let n = shuffled.len();
            shuffled.rotate_left((seed as usize) % n);
            shuffled.reverse();
            prop_assert_eq!(&xor_parity(&shuffled).unwrap(), &parity);

            let mut with_parity = blocks.clone();
            with_parity.push(parity.clone());
            prop_assert!(xor_parity(&with_parity).unwrap().iter().all(|&b| b == 0));
        }
    }
}
