use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

use super::FileId;
use crate::error::StoreError;

/// Fixed-size bitmap whose bits can be set concurrently without a lock.
/// Bits only ever go from 0 to 1 while the partition is live.
#[derive(Debug)]
pub(crate) struct AtomicBitmap {
    words: Vec<AtomicU64>,
}

impl AtomicBitmap {
    #[cfg(test)]
    pub fn new(len: u64) -> Self {
        Self { words: (0..len.div_ceil(64)).map(|_| AtomicU64::new(0)).collect() }
    }

    pub fn from_words(words: &[u64]) -> Self {
        Self { words: words.iter().map(|&w| AtomicU64::new(w)).collect() }
    }

    /// Sets `pos`; returns true if the bit was previously clear.
    pub fn set(&self, pos: u64) -> bool {
        let mask = 1u64 << (pos % 64);
        self.words[(pos / 64) as usize].fetch_or(mask, Ordering::AcqRel) & mask == 0
    }

    pub fn get(&self, pos: u64) -> bool {
        self.words[(pos / 64) as usize].load(Ordering::Acquire) & (1u64 << (pos % 64)) != 0
    }

    pub fn clear_all(&self) {
        for w in &self.words {
            w.store(0, Ordering::Release);
        }
    }

    pub fn snapshot_words(&self) -> Vec<u64> {
        self.words.iter().map(|w| w.load(Ordering::Acquire)).collect()
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| w.load(Ordering::Acquire).count_ones() as u64).sum()
    }
}

/// An owned copy of one partition: the unit that is persisted, replicated
/// and merged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitFile {
    pub file_id: FileId,
    /// Mutable name the partition is published under.
    pub name: String,
    /// Monotone content version; bumps on every mutation.
    pub version: u64,
    bits: u64,
    words: Vec<u64>,
}

impl BitFile {
    pub fn new(file_id: FileId, name: impl Into<String>, bits: u64) -> Self {
        Self {
            file_id,
            name: name.into(),
            version: 1,
            bits,
            words: vec![0; bits.div_ceil(64) as usize],
        }
    }

    pub(crate) fn from_parts(file_id: FileId, name: String, version: u64, bits: u64, words: Vec<u64>) -> Self {
        debug_assert_eq!(words.len() as u64, bits.div_ceil(64));
        Self { file_id, name, version, bits, words }
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, pos: u64) -> bool {
        pos < self.bits && self.words[(pos / 64) as usize] & (1u64 << (pos % 64)) != 0
    }

    /// Sets the given bits, bumping the version if anything changed.
    pub fn set(&mut self, positions: &[u64]) -> Result<u64, StoreError> {
        let mut changed = false;
        for &p in positions {
            if p >= self.bits {
                return Err(StoreError::PositionOutOfRange { position: p, bits: self.bits });
            }
            let w = &mut self.words[(p / 64) as usize];
            let mask = 1u64 << (p % 64);
            changed |= *w & mask == 0;
            *w |= mask;
        }
        if changed {
            self.version += 1;
        }
        Ok(self.version)
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn same_bits(&self, other: &BitFile) -> bool {
        self.bits == other.bits && self.words == other.words
    }

    /// Packed bitmap, bit `i` at byte `i / 8`, bit `i % 8` (LSB first).
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let n = self.bits.div_ceil(8) as usize;
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        out.truncate(n);
        out
    }

    pub(crate) fn words_from_le_bytes(bytes: &[u8], bits: u64) -> Vec<u64> {
        let mut words = vec![0u64; bits.div_ceil(64) as usize];
        for (i, chunk) in bytes.chunks(8).enumerate() {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            words[i] = u64::from_le_bytes(buf);
        }
        words
    }

    /// SHA-256 over the packed bitmap; the content identifier of this version.
    pub fn content_digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_le_bytes()))
    }
}

/// State-based merge of two replicas of the same partition: bitwise OR.
///
/// The version is `max(a, b)` when the bitmaps agree and `max(a, b) + 1`
/// otherwise, so the merged replica supersedes both inputs.
pub fn merge_replicas(a: &BitFile, b: &BitFile) -> Result<BitFile, StoreError> {
    if a.file_id != b.file_id {
        return Err(StoreError::MergeMismatch(a.file_id, b.file_id));
    }
    if a.bits != b.bits {
        return Err(StoreError::Format(format!(
            "replica sizes differ ({} vs {} bits)",
            a.bits, b.bits
        )));
    }
    let words: Vec<u64> = a.words.iter().zip(&b.words).map(|(x, y)| x | y).collect();
    let top = a.version.max(b.version);
    let version = if a.words == b.words { top } else { top + 1 };
    Ok(BitFile { file_id: a.file_id, name: a.name.clone(), version, bits: a.bits, words })
}
