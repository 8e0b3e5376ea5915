//! Exhaustive reference for retrieval, written without the encoder's code
//! paths: its own hashing, its own arbitrary-precision routing by linear
//! scan, its own position arithmetic. Only feasible for small key spaces.

use std::collections::{BTreeSet, HashMap};

use num_bigint::BigUint;
use sha2::{Digest, Sha256};

use super::SimError;
use crate::encoding::{EncodingParams, KeyString};
use crate::store::{BitFile, PartitionStore};

/// Largest key space the oracle will enumerate (2^20).
pub const ORACLE_MAX_KEYS: u64 = 1 << 20;

/// Frozen copy of a store: every registry entry with the bitmap it resolves
/// to, or `None` when that partition cannot be read.
pub struct OracleSnapshot {
    entries: Vec<(BigUint, Option<BitFile>)>,
    bits_per_file: u64,
}

impl OracleSnapshot {
    pub fn capture(store: &PartitionStore) -> Self {
        let entries = store
            .registry()
            .iter()
            .map(|(addr, name)| {
                let file = store.resolve(name).and_then(|(id, _)| store.snapshot_file(id).ok());
                (BigUint::from_bytes_be(addr.as_bytes()), file)
            })
            .collect();
        Self { entries, bits_per_file: crate::store::BitStore::bits_per_file(store) }
    }

    /// Linear scan for the smallest `|a - t|`; ties keep the smaller address.
    fn nearest(&self, target: &BigUint) -> Option<&BitFile> {
        let mut best: Option<(BigUint, &BigUint, &Option<BitFile>)> = None;
        for (addr, file) in &self.entries {
            let d = if addr >= target { addr - target } else { target - addr };
            let better = match &best {
                None => true,
                Some((bd, ba, _)) => d < *bd || (d == *bd && addr < *ba),
            };
            if better {
                best = Some((d, addr, file));
            }
        }
        best.and_then(|(_, _, f)| f.as_ref())
    }
}

fn framed_digest(username: &str, password: &str, prefix: &str) -> String {
    let mut h = Sha256::new();
    for field in [username, password, prefix] {
        h.update((field.len() as u64).to_be_bytes());
        h.update(field.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Every key of the configured radix and length whose prefixes all pass
/// the bit check in the snapshot under `(username, password)`. Unreadable
/// partitions fail the check.
pub fn brute_force_oracle(
    snapshot: &OracleSnapshot,
    username: &str,
    password: &str,
    params: &EncodingParams,
) -> Result<BTreeSet<KeyString>, SimError> {
    let alphabet = params.radix.alphabet();
    let size = (alphabet.len() as f64).powi(params.key_len as i32);
    if size > ORACLE_MAX_KEYS as f64 {
        return Err(SimError::OracleInfeasible { size, limit: ORACLE_MAX_KEYS });
    }
    let modulus = BigUint::from(snapshot.bits_per_file);
    let mut memo: HashMap<String, bool> = HashMap::new();
    let mut passes = |prefix: &str| -> bool {
        if let Some(&v) = memo.get(prefix) {
            return v;
        }
        let digest = framed_digest(username, password, prefix);
        let target = BigUint::parse_bytes(digest.as_bytes(), 16).expect("hex digest");
        let v = match snapshot.nearest(&target) {
            None => false,
            Some(file) => digest.as_bytes().chunks(params.segment_width).all(|seg| {
                let pos = BigUint::parse_bytes(seg, 16).expect("hex segment") % &modulus;
                file.get(pos.iter_u64_digits().next().unwrap_or(0))
            }),
        };
        memo.insert(prefix.to_string(), v);
        v
    };

    let total = size as u64;
    let base = alphabet.len() as u64;
    let mut out = BTreeSet::new();
    for index in 0..total {
        let mut digits = vec![0u8; params.key_len];
        let mut rest = index;
        for d in digits.iter_mut().rev() {
            *d = alphabet[(rest % base) as usize];
            rest /= base;
        }
        let key = String::from_utf8(digits).expect("ascii");
        if (1..=key.len()).all(|l| passes(&key[..l])) {
            out.insert(KeyString::new(key, params.radix, params.key_len)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{Credential, Radix};
    use crate::lut::{Bflut, RetrieveOptions};
    use crate::store::ActorId;

    #[test]
    fn empty_store_yields_nothing() {
        let store = PartitionStore::init(3, 256, 1).unwrap();
        let params = EncodingParams::new(Radix::Binary, 6, 16).unwrap();
        let snap = OracleSnapshot::capture(&store);
        assert!(brute_force_oracle(&snap, "u", "p", &params).unwrap().is_empty());
    }

    #[test]
    fn single_key_in_huge_store_is_a_singleton() {
        let store = PartitionStore::init(2, 1 << 24, 2).unwrap();
        let params = EncodingParams::new(Radix::Binary, 10, 16).unwrap();
        let cred = Credential::new("solo", "pw").unwrap();
        let key = KeyString::new("1011001110", Radix::Binary, 10).unwrap();
        Bflut::new(params).insert(&store, &cred, &key, &ActorId::new("solo")).unwrap();
        let got = brute_force_oracle(&OracleSnapshot::capture(&store), "solo", "pw", &params).unwrap();
        assert_eq!(got, BTreeSet::from([key]));
    }

    #[test]
    fn agrees_with_retrieval_on_a_crowded_store() {
        let store = PartitionStore::init(3, 128, 3).unwrap();
        let params = EncodingParams::new(Radix::Binary, 8, 32).unwrap();
        let lut = Bflut::new(params);
        for i in 0..12 {
            let cred = Credential::new(format!("u{i}"), "pw").unwrap();
            let key = KeyString::new(format!("{:08b}", i * 37 % 256), Radix::Binary, 8).unwrap();
            lut.insert(&store, &cred, &key, &ActorId::new("a")).unwrap();
        }
        let snap = OracleSnapshot::capture(&store);
        for i in 0..20 {
            let cred = Credential::new(format!("u{i}"), "pw").unwrap();
            let want = lut.retrieve(&store, &cred, RetrieveOptions::default()).unwrap().candidates;
            assert_eq!(brute_force_oracle(&snap, &format!("u{i}"), "pw", &params).unwrap(), want);
        }
    }

    #[test]
    fn infeasible_space_rejected() {
        let store = PartitionStore::init(1, 64, 0).unwrap();
        let params = EncodingParams::new(Radix::Hex, 6, 16).unwrap();
        let err = brute_force_oracle(&OracleSnapshot::capture(&store), "u", "p", &params);
        assert!(matches!(err, Err(SimError::OracleInfeasible { .. })));
    }
}
