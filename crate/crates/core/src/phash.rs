//! 64-bit DCT perceptual hashes and Hamming distance.
//!
//! The hash keeps the sign of each low-frequency coefficient relative to the
//! block median: bit `k = 8r + c` is set iff coefficient `(r + 1, c + 1)` is
//! strictly greater than the median of the 64-coefficient block.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::imagecore::{canonical_dct, DctGrid, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct PerceptualHash(pub u64);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid hash text {0:?}: expected 16 hex digits")]
pub struct ParseHashError(String);

impl PerceptualHash {
    pub const fn bits(self) -> u64 {
        self.0
    }

    pub fn bit(self, k: u32) -> bool {
        (self.0 >> k) & 1 == 1
    }

    pub fn distance(self, other: PerceptualHash) -> u32 {
        hamming(self, other)
    }
}

impl fmt::Display for PerceptualHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for PerceptualHash {
    type Err = ParseHashError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 16 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(ParseHashError(s.to_owned()));
        }
        u64::from_str_radix(s, 16)
            .map(PerceptualHash)
            .map_err(|_| ParseHashError(s.to_owned()))
    }
}

impl Serialize for PerceptualHash {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PerceptualHash {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[inline]
pub fn hamming(a: PerceptualHash, b: PerceptualHash) -> u32 {
    (a.0 ^ b.0).count_ones()
}

/// Coefficients this close to zero are treated as exactly zero so that flat
/// images, whose AC terms are pure rounding noise, hash to 0.
pub const ZERO_SNAP: f64 = 1e-9;

/// Median of the block as the mean of the 32nd and 33rd order statistics.
pub fn block_median(block: &[f64; 64]) -> f64 {
    let mut sorted = *block;
    sorted.sort_by(f64::total_cmp);
    0.5 * (sorted[31] + sorted[32])
}

/// Thresholds a low-frequency block against its median.
pub fn hash_from_block(block: &[f64; 64]) -> PerceptualHash {
    let block = block.map(|v| if v.abs() < ZERO_SNAP { 0.0 } else { v });
    let m = block_median(&block);
    let bits = block
        .iter()
        .enumerate()
        .fold(0u64, |acc, (k, &v)| if v > m { acc | (1 << k) } else { acc });
    PerceptualHash(bits)
}

pub fn hash_from_dct(grid: &DctGrid) -> PerceptualHash {
    hash_from_block(&grid.low_frequency_block())
}

pub fn phash(img: &Raster) -> PerceptualHash {
    hash_from_dct(&canonical_dct(img))
}
