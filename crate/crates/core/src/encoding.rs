//! Credential hashing and the hash-to-bit-position mapping.
//!
//! Every prefix of a stored key is hashed together with the owner's
//! credential. The 64 hex characters of the digest are cut into segments of
//! `segment_width` characters; each segment, read as a big-endian integer and
//! reduced modulo the partition size, names one bit to activate.

use std::fmt;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::address::{HashAddress, HASH_HEX_LEN};
use crate::error::EncodingError;

/// A username/password pair. Only digests derived from it ever reach a store.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Credential {
    username: String,
    password: String,
}

impl Credential {
    pub fn new(username: impl Into<String>, password: impl Into<String>) -> Result<Self, EncodingError> {
        let username = username.into();
        let password = password.into();
        if username.is_empty() {
            return Err(EncodingError::InvalidCredential("username is empty"));
        }
        if password.is_empty() {
            return Err(EncodingError::InvalidCredential("password is empty"));
        }
        Ok(Self { username, password })
    }

    pub fn username(&self) -> &str {
        &self.username
    }

    /// A hasher that has already absorbed the framed username and password.
    pub fn prefix_hasher(&self) -> PrefixHasher {
        let mut state = Sha256::new();
        absorb_framed(&mut state, self.username.as_bytes());
        absorb_framed(&mut state, self.password.as_bytes());
        PrefixHasher { state }
    }
}

impl fmt::Debug for Credential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Credential")
            .field("username", &self.username)
            .field("password", &"<redacted>")
            .finish()
    }
}

fn absorb_framed(state: &mut Sha256, field: &[u8]) {
    state.update((field.len() as u64).to_be_bytes());
    state.update(field);
}

/// Hashes prefixes for one credential without re-absorbing the credential.
#[derive(Clone)]
pub struct PrefixHasher {
    state: Sha256,
}

impl PrefixHasher {
    /// Digest of the framed `(username, password, prefix)`. The prefix is not
    /// validated here.
    pub fn address(&self, prefix: &[u8]) -> HashAddress {
        let mut state = self.state.clone();
        absorb_framed(&mut state, prefix);
        HashAddress::from_bytes(state.finalize().into())
    }
}

/// Key alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Radix {
    Binary,
    Hex,
}

impl Radix {
    pub fn from_base(base: u32) -> Result<Self, EncodingError> {
        match base {
            2 => Ok(Radix::Binary),
            16 => Ok(Radix::Hex),
            other => Err(EncodingError::InvalidRadix(other)),
        }
    }

    pub fn base(self) -> u32 {
        match self {
            Radix::Binary => 2,
            Radix::Hex => 16,
        }
    }

    /// Digits in ascending order; hex digits are lowercase.
    pub fn alphabet(self) -> &'static [u8] {
        match self {
            Radix::Binary => b"01",
            Radix::Hex => b"0123456789abcdef",
        }
    }

    pub fn is_digit(self, c: u8) -> bool {
        match self {
            Radix::Binary => c == b'0' || c == b'1',
            Radix::Hex => c.is_ascii_digit() || (b'a'..=b'f').contains(&c),
        }
    }
}

impl fmt::Display for Radix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.base())
    }
}

/// A stored key: exactly `key_len` digits of the configured radix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyString(String);

impl KeyString {
    pub fn new(s: impl Into<String>, radix: Radix, key_len: usize) -> Result<Self, EncodingError> {
        let s = s.into();
        if s.len() != key_len {
            return Err(EncodingError::InvalidKey(format!(
                "expected {key_len} characters, got {}",
                s.len()
            )));
        }
        if let Some(bad) = s.bytes().find(|&c| !radix.is_digit(c)) {
            return Err(EncodingError::InvalidKey(format!(
                "character {:?} is not a radix-{radix} digit",
                bad as char
            )));
        }
        Ok(Self(s))
    }

    /// Uniformly random key over the alphabet.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, radix: Radix, key_len: usize) -> Self {
        let alphabet = radix.alphabet();
        let s = (0..key_len)
            .map(|_| alphabet[rng.gen_range(0..alphabet.len())] as char)
            .collect();
        Self(s)
    }

    /// Builds a key from digits already known to be valid.
    pub(crate) fn from_valid_bytes(bytes: Vec<u8>) -> Self {
        Self(String::from_utf8(bytes).expect("alphabet is ASCII"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for KeyString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Hash of `(username, password, prefix)`, each field length-prefixed with a
/// big-endian `u64` before SHA-256.
pub fn derive_prefix_address(
    cred: &Credential,
    prefix: &str,
    radix: Radix,
) -> Result<HashAddress, EncodingError> {
    if prefix.is_empty() {
        return Err(EncodingError::InvalidPrefix {
            prefix: prefix.to_string(),
            reason: "prefix is empty".into(),
        });
    }
    if let Some(bad) = prefix.bytes().find(|&c| !radix.is_digit(c)) {
        return Err(EncodingError::InvalidPrefix {
            prefix: prefix.to_string(),
            reason: format!("{:?} is not a radix-{radix} digit", bad as char),
        });
    }
    Ok(cred.prefix_hasher().address(prefix.as_bytes()))
}

/// The bit positions one prefix activates, plus the address used to route
/// them to a partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitPositionSet {
    pub file_address: HashAddress,
    pub positions: Vec<u64>,
}

impl BitPositionSet {
    /// Positions sorted with duplicates removed.
    pub fn distinct(&self) -> Vec<u64> {
        let mut p = self.positions.clone();
        p.sort_unstable();
        p.dedup();
        p
    }
}

pub fn check_segment_width(width: usize) -> Result<(), EncodingError> {
    if width == 0 || HASH_HEX_LEN % width != 0 {
        return Err(EncodingError::InvalidSegmentation { width, total: HASH_HEX_LEN });
    }
    Ok(())
}

/// Splits the 64 hex characters of `addr` into `64 / width` segments and
/// reduces each (big-endian) modulo `bits_per_file`. Order follows the
/// segments; duplicates are kept.
pub fn segment_positions(
    addr: &HashAddress,
    bits_per_file: u64,
    width: usize,
) -> Result<BitPositionSet, EncodingError> {
    check_segment_width(width)?;
    if bits_per_file == 0 {
        return Err(EncodingError::EmptyFile);
    }
    let modulus = bits_per_file as u128;
    let positions = (0..HASH_HEX_LEN / width)
        .map(|seg| {
            (seg * width..(seg + 1) * width)
                .fold(0u128, |acc, i| (acc * 16 + addr.nibble(i) as u128) % modulus) as u64
        })
        .collect();
    Ok(BitPositionSet { file_address: *addr, positions })
}

/// Encoding parameters shared by every insert and retrieval on one store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodingParams {
    pub radix: Radix,
    pub key_len: usize,
    /// Hex characters per segment.
    pub segment_width: usize,
}

impl EncodingParams {
    pub fn new(radix: Radix, key_len: usize, segment_width: usize) -> Result<Self, EncodingError> {
        check_segment_width(segment_width)?;
        if key_len == 0 {
            return Err(EncodingError::InvalidKey("key length must be at least 1".into()));
        }
        Ok(Self { radix, key_len, segment_width })
    }

    pub fn positions_per_prefix(&self) -> usize {
        HASH_HEX_LEN / self.segment_width
    }

    pub fn max_bits_per_key(&self) -> usize {
        self.key_len * self.positions_per_prefix()
    }
}
