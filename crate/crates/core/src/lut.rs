//! Key insertion and prefix-guided retrieval.
//!
//! Inserting a key lights, for every prefix length `1..=key_len`, the bit
//! positions derived from `hash(credential, prefix)` in the partition nearest
//! to that hash. Retrieval walks the key alphabet depth-first and only
//! descends into prefixes whose bits are all lit, so every inserted key is
//! found and false positives appear only where other keys' bits overlap.

use std::collections::{BTreeSet, HashSet};

use thiserror::Error;

use crate::encoding::{segment_positions, Credential, EncodingParams, KeyString, PrefixHasher};
use crate::error::{EncodingError, StoreError};
use crate::store::{ActorId, BitStore, FileId};

#[derive(Debug, Error)]
pub enum BflutError {
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("partition unreachable while writing prefix of length {depth}: {source}")]
    PartitionUnavailable { depth: usize, source: StoreError },
    #[error(transparent)]
    Store(StoreError),
    #[error("every check was wildcarded; the search carries no information")]
    DegenerateWildcard,
    #[error("search exceeded its budget of {limit} lookups")]
    SearchBudgetExceeded { limit: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InsertReceipt {
    /// Bits that went from 0 to 1.
    pub newly_set: u64,
    /// Distinct positions written, summed over prefixes.
    pub positions_written: u64,
    /// Distinct partitions written.
    pub files_touched: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetrieveOptions {
    /// Treat erased or unavailable partitions as if all checked bits were set.
    pub wildcard_on_missing: bool,
    /// Upper bound on bit checks before the search gives up.
    pub max_lookups: u64,
}

impl Default for RetrieveOptions {
    fn default() -> Self {
        Self { wildcard_on_missing: false, max_lookups: 1 << 24 }
    }
}

impl RetrieveOptions {
    pub fn wildcard() -> Self {
        Self { wildcard_on_missing: true, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RetrievalResult {
    /// Keys whose every prefix passed the bit check, in ascending order.
    pub candidates: BTreeSet<KeyString>,
    /// Distinct partitions accessed (including faulted ones).
    pub files_touched: usize,
    /// Bit-check operations performed.
    pub lookups: u64,
    /// Checks that survived only because of a fault and wildcard mode.
    pub wildcarded: u64,
}

/// What happened at one prefix check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Hit,
    Miss,
    Erased { wildcard: bool },
    Unavailable { wildcard: bool },
}

impl Access {
    pub fn survived(self) -> bool {
        match self {
            Access::Hit => true,
            Access::Miss => false,
            Access::Erased { wildcard } | Access::Unavailable { wildcard } => wildcard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub prefix: String,
    pub file: FileId,
    pub positions: Vec<u64>,
    pub access: Access,
}

/// Encoder bound to one set of encoding parameters.
#[derive(Debug, Clone, Copy)]
pub struct Bflut {
    params: EncodingParams,
}

impl Bflut {
    pub fn new(params: EncodingParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &EncodingParams {
        &self.params
    }

    fn validate_key(&self, key: &KeyString) -> Result<(), EncodingError> {
        KeyString::new(key.as_str(), self.params.radix, self.params.key_len).map(|_| ())
    }

    /// Distinct bit positions and routing address for one prefix.
    fn probe<S: BitStore + ?Sized>(
        &self,
        store: &S,
        hasher: &PrefixHasher,
        prefix: &[u8],
    ) -> Result<(Result<FileId, StoreError>, Vec<u64>), EncodingError> {
        let addr = hasher.address(prefix);
        let set = segment_positions(&addr, store.bits_per_file(), self.params.segment_width)?;
        Ok((store.nearest_file(&addr), set.distinct()))
    }

    pub fn insert<S: BitStore + ?Sized>(
        &self,
        store: &S,
        cred: &Credential,
        key: &KeyString,
        actor: &ActorId,
    ) -> Result<InsertReceipt, BflutError> {
        self.validate_key(key)?;
        let hasher = cred.prefix_hasher();
        let bytes = key.as_str().as_bytes();
        let mut receipt = InsertReceipt::default();
        let mut files = HashSet::new();
        for depth in 1..=bytes.len() {
            let (routed, positions) = self.probe(store, &hasher, &bytes[..depth])?;
            let fail = |e: StoreError| {
                if e.is_fault() {
                    BflutError::PartitionUnavailable { depth, source: e }
                } else {
                    BflutError::Store(e)
                }
            };
            let file = routed.map_err(fail)?;
            let outcome = store.set_bits(file, &positions, actor).map_err(fail)?;
            receipt.newly_set += outcome.newly_set as u64;
            receipt.positions_written += positions.len() as u64;
            files.insert(file);
        }
        receipt.files_touched = files.len();
        Ok(receipt)
    }

    fn check<S: BitStore + ?Sized>(
        &self,
        store: &S,
        file: Result<FileId, StoreError>,
        positions: &[u64],
        wildcard: bool,
    ) -> Result<(FileId, Access), BflutError> {
        let checked = file.and_then(|f| store.check_bits(f, positions).map(|hit| (f, hit)));
        match checked {
            Ok((f, true)) => Ok((f, Access::Hit)),
            Ok((f, false)) => Ok((f, Access::Miss)),
            Err(StoreError::Erased(f)) => Ok((f, Access::Erased { wildcard })),
            Err(StoreError::Unavailable(f)) => Ok((f, Access::Unavailable { wildcard })),
            Err(e) => Err(BflutError::Store(e)),
        }
    }

    /// True iff every prefix of `key` passes the bit check under `cred`.
    pub fn contains<S: BitStore + ?Sized>(
        &self,
        store: &S,
        cred: &Credential,
        key: &KeyString,
        wildcard_on_missing: bool,
    ) -> Result<bool, BflutError> {
        self.validate_key(key)?;
        let hasher = cred.prefix_hasher();
        let bytes = key.as_str().as_bytes();
        for depth in 1..=bytes.len() {
            let (file, positions) = self.probe(store, &hasher, &bytes[..depth])?;
            let (_, access) = self.check(store, file, &positions, wildcard_on_missing)?;
            if !access.survived() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn retrieve<S: BitStore + ?Sized>(
        &self,
        store: &S,
        cred: &Credential,
        opts: RetrieveOptions,
    ) -> Result<RetrievalResult, BflutError> {
        self.search(store, cred, opts, None)
    }

    /// Retrieval plus the ordered log of every check it made.
    pub fn lookup_trace<S: BitStore + ?Sized>(
        &self,
        store: &S,
        cred: &Credential,
        opts: RetrieveOptions,
    ) -> Result<(RetrievalResult, Vec<TraceEntry>), BflutError> {
        let mut trace = Vec::new();
        let result = self.search(store, cred, opts, Some(&mut trace))?;
        Ok((result, trace))
    }

    fn search<S: BitStore + ?Sized>(
        &self,
        store: &S,
        cred: &Credential,
        opts: RetrieveOptions,
        mut trace: Option<&mut Vec<TraceEntry>>,
    ) -> Result<RetrievalResult, BflutError> {
        if opts.wildcard_on_missing && !store.has_live_files() {
            return Err(BflutError::DegenerateWildcard);
        }
        let hasher = cred.prefix_hasher();
        let alphabet = self.params.radix.alphabet();
        let key_len = self.params.key_len;
        let mut result = RetrievalResult::default();
        let mut files = HashSet::new();
        let mut real_checks = 0u64;

        // Each stack entry is a prefix that already passed its check.
        let mut prefix: Vec<u8> = Vec::with_capacity(key_len);
        let mut stack: Vec<(usize, u8)> = alphabet.iter().rev().map(|&c| (1, c)).collect();
        while let Some((depth, c)) = stack.pop() {
            prefix.truncate(depth - 1);
            prefix.push(c);
            if result.lookups >= opts.max_lookups {
                return Err(BflutError::SearchBudgetExceeded { limit: opts.max_lookups });
            }
            let (routed, positions) = self.probe(store, &hasher, &prefix)?;
            let (file, access) = self.check(store, routed, &positions, opts.wildcard_on_missing)?;
            result.lookups += 1;
            files.insert(file);
            match access {
                Access::Hit | Access::Miss => real_checks += 1,
                _ if access.survived() => result.wildcarded += 1,
                _ => {}
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(TraceEntry {
                    prefix: String::from_utf8_lossy(&prefix).into_owned(),
                    file,
                    positions,
                    access,
                });
            }
            if !access.survived() {
                continue;
            }
            if depth == key_len {
                result.candidates.insert(KeyString::from_valid_bytes(prefix.clone()));
            } else {
                stack.extend(alphabet.iter().rev().map(|&c| (depth + 1, c)));
            }
        }
        if opts.wildcard_on_missing && real_checks == 0 {
            return Err(BflutError::DegenerateWildcard);
        }
        result.files_touched = files.len();
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::Radix;
    use crate::store::{FaultPlan, PartitionStore};

    fn actor() -> ActorId {
        ActorId::new("test")
    }

    fn lut(radix: Radix, key_len: usize, width: usize) -> Bflut {
        Bflut::new(EncodingParams::new(radix, key_len, width).unwrap())
    }

    #[test]
    fn empty_store_has_no_candidates() {
        let store = PartitionStore::init(4, 1 << 12, 0).unwrap();
        let b = lut(Radix::Binary, 4, 4);
        let cred = Credential::new("John Smith", "password").unwrap();
        let (r, trace) = b.lookup_trace(&store, &cred, RetrieveOptions::default()).unwrap();
        assert!(r.candidates.is_empty());
        assert_eq!(trace.len(), 2);
        assert!(trace.iter().all(|t| t.access == Access::Miss));
        assert_eq!(r.lookups, 2);
    }

    #[test]
    fn binary_example_round_trips() {
        let store = PartitionStore::init(8, 1 << 16, 1).unwrap();
        let b = lut(Radix::Binary, 4, 4);
        let cred = Credential::new("John Smith", "password").unwrap();
        let key = KeyString::new("0110", Radix::Binary, 4).unwrap();
        b.insert(&store, &cred, &key, &actor()).unwrap();
        let (r, trace) = b.lookup_trace(&store, &cred, RetrieveOptions::default()).unwrap();
        assert_eq!(r.candidates.into_iter().collect::<Vec<_>>(), vec![key]);
        assert!(trace.len() >= 4);
        let hits: Vec<_> = trace.iter().filter(|t| t.access == Access::Hit).map(|t| t.prefix.as_str()).collect();
        assert_eq!(hits, vec!["0", "01", "011", "0110"]);
        let unique: HashSet<_> = trace.iter().map(|t| t.file).collect();
        assert_eq!(unique.len(), r.files_touched);
    }

    #[test]
    fn insert_is_idempotent_and_within_bit_budget() {
        let store = PartitionStore::init(10, 1 << 20, 2).unwrap();
        let b = lut(Radix::Hex, 64, 4);
        let cred = Credential::new("user123", "password123").unwrap();
        let key = KeyString::random(&mut rand::thread_rng(), Radix::Hex, 64);
        let first = b.insert(&store, &cred, &key, &actor()).unwrap();
        assert!(first.positions_written <= 64 * 16);
        assert!(first.newly_set <= first.positions_written);
        assert_eq!(store.count_ones(), first.newly_set);
        let second = b.insert(&store, &cred, &key, &actor()).unwrap();
        assert_eq!(second.newly_set, 0);
        assert_eq!(second.positions_written, first.positions_written);
    }

    #[test]
    fn key_must_match_encoder() {
        let store = PartitionStore::init(1, 64, 0).unwrap();
        let b = lut(Radix::Binary, 4, 4);
        let cred = Credential::new("u", "p").unwrap();
        let hex = KeyString::new("ab", Radix::Hex, 2).unwrap();
        assert!(matches!(b.insert(&store, &cred, &hex, &actor()), Err(BflutError::Encoding(_))));
    }

    #[test]
    fn insert_into_erased_partition_reports_unavailable() {
        let store = PartitionStore::init(1, 64, 0).unwrap();
        store.apply_faults(&FaultPlan { erased: [FileId(0)].into(), ..Default::default() }).unwrap();
        let b = lut(Radix::Binary, 3, 4);
        let cred = Credential::new("u", "p").unwrap();
        let key = KeyString::new("010", Radix::Binary, 3).unwrap();
        assert!(matches!(
            b.insert(&store, &cred, &key, &actor()),
            Err(BflutError::PartitionUnavailable { depth: 1, .. })
        ));
    }

    #[test]
    fn wildcard_over_unavailable_partition() {
        let store = PartitionStore::init(3, 1 << 14, 5).unwrap();
        let b = lut(Radix::Binary, 10, 4);
        let cred = Credential::new("alice", "pw").unwrap();
        let key = KeyString::new("1011001110", Radix::Binary, 10).unwrap();
        b.insert(&store, &cred, &key, &actor()).unwrap();
        let down = FaultPlan { unavailable: [FileId(1)].into(), ..Default::default() };
        store.apply_faults(&down).unwrap();
        let with = b.retrieve(&store, &cred, RetrieveOptions::wildcard()).unwrap();
        assert!(with.candidates.contains(&key));
        store.clear_faults();
        let after = b.retrieve(&store, &cred, RetrieveOptions::default()).unwrap();
        assert!(after.candidates.contains(&key));
    }

    #[test]
    fn total_erasure_is_degenerate() {
        let store = PartitionStore::init(2, 64, 0).unwrap();
        store
            .apply_faults(&FaultPlan { erased: [FileId(0), FileId(1)].into(), ..Default::default() })
            .unwrap();
        let b = lut(Radix::Binary, 3, 4);
        let cred = Credential::new("u", "p").unwrap();
        assert!(matches!(
            b.retrieve(&store, &cred, RetrieveOptions::wildcard()),
            Err(BflutError::DegenerateWildcard)
        ));
        let r = b.retrieve(&store, &cred, RetrieveOptions::default()).unwrap();
        assert!(r.candidates.is_empty());
    }

    #[test]
    fn search_budget_is_enforced() {
        let store = PartitionStore::init(1, 64, 0).unwrap();
        let b = lut(Radix::Binary, 8, 4);
        let cred = Credential::new("u", "p").unwrap();
        let opts = RetrieveOptions { max_lookups: 1, ..Default::default() };
        assert!(matches!(
            b.retrieve(&store, &cred, opts),
            Err(BflutError::SearchBudgetExceeded { limit: 1 })
        ));
    }

    #[test]
    fn contains_agrees_with_retrieve() {
        let store = PartitionStore::init(4, 512, 9).unwrap();
        let b = lut(Radix::Binary, 6, 8);
        let cred = Credential::new("bob", "pw").unwrap();
        let mut rng = rand::thread_rng();
        for _ in 0..10 {
            let k = KeyString::random(&mut rng, Radix::Binary, 6);
            b.insert(&store, &cred, &k, &actor()).unwrap();
        }
        let r = b.retrieve(&store, &cred, RetrieveOptions::default()).unwrap();
        for i in 0..64u32 {
            let k = KeyString::new(format!("{i:06b}"), Radix::Binary, 6).unwrap();
            assert_eq!(b.contains(&store, &cred, &k, false).unwrap(), r.candidates.contains(&k));
        }
    }
}
