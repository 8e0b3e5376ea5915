//! 256-bit hash addresses and the integer arithmetic routing needs.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::EncodingError;

/// Number of hex characters in a hash address.
pub const HASH_HEX_LEN: usize = 64;

/// A SHA-256 output viewed both as 64 lowercase hex characters and as an
/// unsigned big-endian 256-bit integer.
///
/// Byte-wise lexicographic order on the big-endian representation is the
/// integer order, so the derived `Ord` can be used directly for routing.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HashAddress([u8; 32]);

impl HashAddress {
    pub const ZERO: HashAddress = HashAddress([0; 32]);
    pub const MAX: HashAddress = HashAddress([0xff; 32]);

    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Builds an address from a small integer; handy for tests and examples.
    pub fn from_u128(v: u128) -> Self {
        let mut bytes = [0u8; 32];
        bytes[16..].copy_from_slice(&v.to_be_bytes());
        Self(bytes)
    }

    /// Hex digit `i` (0 = most significant) as a value in `0..16`.
    pub fn nibble(&self, i: usize) -> u8 {
        let b = self.0[i / 2];
        if i % 2 == 0 {
            b >> 4
        } else {
            b & 0x0f
        }
    }

    /// `|self - other|` on the integer line.
    pub fn abs_diff(&self, other: &HashAddress) -> HashAddress {
        match self.cmp(other) {
            Ordering::Less => other.wrapping_sub(self),
            _ => self.wrapping_sub(other),
        }
    }

    fn wrapping_sub(&self, rhs: &HashAddress) -> HashAddress {
        let mut out = [0u8; 32];
        let mut borrow = 0i16;
        for i in (0..32).rev() {
            let mut d = self.0[i] as i16 - rhs.0[i] as i16 - borrow;
            borrow = if d < 0 {
                d += 256;
                1
            } else {
                0
            };
            out[i] = d as u8;
        }
        HashAddress(out)
    }

    /// The address divided by 2^256, i.e. its position on the unit interval.
    /// Only the leading 64 bits contribute; this is used for reporting.
    pub fn unit_fraction(&self) -> f64 {
        let mut hi = [0u8; 8];
        hi.copy_from_slice(&self.0[..8]);
        u64::from_be_bytes(hi) as f64 / 2f64.powi(64)
    }
}

impl FromStr for HashAddress {
    type Err = EncodingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != HASH_HEX_LEN || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(EncodingError::InvalidAddress(s.to_string()));
        }
        let mut bytes = [0u8; 32];
        hex::decode_to_slice(s, &mut bytes)
            .map_err(|_| EncodingError::InvalidAddress(s.to_string()))?;
        Ok(Self(bytes))
    }
}

impl fmt::Display for HashAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for HashAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HashAddress({})", self.to_hex())
    }
}
