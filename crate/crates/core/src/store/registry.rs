//! Address registry: a sorted map from 256-bit addresses to mutable names,
//! with nearest-address lookup on the integer line.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::address::HashAddress;
use crate::error::StoreError;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FileRegistry {
    entries: BTreeMap<HashAddress, String>,
}

impl FileRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false if the address is already taken.
    pub fn insert(&mut self, addr: HashAddress, name: impl Into<String>) -> bool {
        if self.entries.contains_key(&addr) {
            return false;
        }
        self.entries.insert(addr, name.into());
        true
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&HashAddress, &String)> {
        self.entries.iter()
    }

    /// The entry minimizing `|address - target|`; ties go to the smaller
    /// address.
    pub fn nearest(&self, target: &HashAddress) -> Option<(&HashAddress, &String)> {
        let below = self.entries.range(..=target).next_back();
        let above = self.entries.range(target..).next();
        match (below, above) {
            (Some(b), Some(a)) => {
                if target.abs_diff(b.0) <= a.0.abs_diff(target) {
                    Some(b)
                } else {
                    Some(a)
                }
            }
            (b, a) => b.or(a),
        }
    }

    pub fn snapshot(&self, generation: u64) -> RegistrySnapshot {
        RegistrySnapshot::new(
            generation,
            self.entries.iter().map(|(a, n)| (*a, n.clone())).collect(),
        )
    }

    /// One `<hex address> <name>` line per entry, sorted by address.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (addr, name) in &self.entries {
            let _ = writeln!(out, "{addr} {name}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, StoreError> {
        let mut reg = FileRegistry::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (addr, name) = line
                .split_once(' ')
                .ok_or_else(|| StoreError::Format(format!("registry line {}: expected `<address> <name>`", lineno + 1)))?;
            let addr: HashAddress = addr
                .parse()
                .map_err(|e| StoreError::Format(format!("registry line {}: {e}", lineno + 1)))?;
            if !reg.insert(addr, name.trim()) {
                return Err(StoreError::Format(format!("registry line {}: duplicate address", lineno + 1)));
            }
        }
        Ok(reg)
    }
}

/// A caller-side copy of the registry used for direct routing, sealed with a
/// SHA-256 digest over its text form and generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistrySnapshot {
    pub generation: u64,
    entries: Vec<(HashAddress, String)>,
    seal: [u8; 32],
}

impl RegistrySnapshot {
    fn new(generation: u64, entries: Vec<(HashAddress, String)>) -> Self {
        let seal = Self::compute_seal(generation, &entries);
        Self { generation, entries, seal }
    }

    fn compute_seal(generation: u64, entries: &[(HashAddress, String)]) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(generation.to_be_bytes());
        for (addr, name) in entries {
            h.update(addr.as_bytes());
            h.update((name.len() as u64).to_be_bytes());
            h.update(name.as_bytes());
        }
        h.finalize().into()
    }

    pub fn verify(&self) -> bool {
        Self::compute_seal(self.generation, &self.entries) == self.seal
    }

    pub fn entries(&self) -> &[(HashAddress, String)] {
        &self.entries
    }

    /// Same metric and tie rule as [`FileRegistry::nearest`], evaluated on
    /// the sorted copy.
    pub fn nearest(&self, target: &HashAddress) -> Option<&str> {
        let idx = self.entries.partition_point(|(a, _)| a <= target);
        let below = idx.checked_sub(1).map(|i| &self.entries[i]);
        let above = self.entries.get(idx);
        let pick = match (below, above) {
            (Some(b), Some(a)) => {
                if target.abs_diff(&b.0) <= a.0.abs_diff(target) {
                    b
                } else {
                    a
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => return None,
        };
        Some(&pick.1)
    }

    /// Text document: a `generation <n>` line, the registry lines, and a
    /// trailing `seal <hex>` line.
    pub fn to_text(&self) -> String {
        let mut out = format!("generation {}\n", self.generation);
        for (addr, name) in &self.entries {
            let _ = writeln!(out, "{addr} {name}");
        }
        let _ = writeln!(out, "seal {}", hex::encode(self.seal));
        out
    }

    pub fn from_text(text: &str) -> Result<Self, StoreError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let generation = lines
            .next()
            .and_then(|l| l.strip_prefix("generation "))
            .and_then(|g| g.trim().parse().ok())
            .ok_or_else(|| StoreError::Format("snapshot: missing generation line".into()))?;
        let mut entries = Vec::new();
        let mut seal = None;
        for line in lines {
            if let Some(s) = line.strip_prefix("seal ") {
                let mut buf = [0u8; 32];
                hex::decode_to_slice(s.trim(), &mut buf)
                    .map_err(|_| StoreError::Format("snapshot: bad seal".into()))?;
                seal = Some(buf);
                break;
            }
            let reg = FileRegistry::from_text(line)?;
            entries.extend(reg.entries.into_iter());
        }
        let seal = seal.ok_or_else(|| StoreError::Format("snapshot: missing seal".into()))?;
        entries.sort();
        let snap = Self { generation, entries, seal };
        if !snap.verify() {
            return Err(StoreError::Format("snapshot: seal does not match contents".into()));
        }
        Ok(snap)
    }
}
