use std::collections::BTreeSet;

use bflut::address::HashAddress;
use bflut::analysis::{self, AnalysisParams};
use bflut::store::{merge_replicas, BitFile, FaultPlan, FileRegistry};
use bflut::{ActorId, Bflut, Credential, EncodingParams, FileId, KeyString, PartitionStore, Radix, RetrieveOptions};
use num_bigint::BigUint;
use proptest::prelude::*;

fn actor() -> ActorId {
    ActorId::new("prop")
}

/// A small binary store with one inserted key per entry of `keys`.
fn populated(
    files: usize,
    bits: u64,
    seed: u64,
    key_len: usize,
    width: usize,
    keys: &[u32],
) -> (PartitionStore, Bflut, Vec<(Credential, KeyString)>) {
    let store = PartitionStore::init(files, bits, seed).unwrap();
    let lut = Bflut::new(EncodingParams::new(Radix::Binary, key_len, width).unwrap());
    let members: Vec<_> = keys
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let cred = Credential::new(format!("u{i}"), format!("p{seed}")).unwrap();
            let key = KeyString::new(format!("{:032b}", k)[32 - key_len..].to_string(), Radix::Binary, key_len).unwrap();
            lut.insert(&store, &cred, &key, &actor()).unwrap();
            (cred, key)
        })
        .collect();
    (store, lut, members)
}

fn widths() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![4usize, 8, 16, 32, 64])
}

fn bitfile(bits: u64, set: &[u64], version: u64) -> BitFile {
    let mut f = BitFile::new(FileId(0), "part-00000", bits);
    let positions: Vec<u64> = set.iter().map(|p| p % bits).collect();
    f.set(&positions).unwrap();
    f.version = version;
    f
}

fn address() -> impl Strategy<Value = HashAddress> {
    any::<[u8; 32]>().prop_map(HashAddress::from_bytes)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn inserted_keys_are_always_retrieved(
        files in 1usize..8, bits in 16u64..512, seed: u64, key_len in 1usize..12,
        width in widths(), keys in prop::collection::vec(any::<u32>(), 1..16),
    ) {
        let (store, lut, members) = populated(files, bits, seed, key_len, width, &keys);
        for (cred, key) in &members {
            let got = lut.retrieve(&store, cred, RetrieveOptions::default()).unwrap();
            prop_assert!(got.candidates.contains(key));
            prop_assert!(lut.contains(&store, cred, key, false).unwrap());
        }
    }

    #[test]
    fn candidate_sets_only_grow_with_inserts(
        files in 1usize..6, bits in 16u64..256, seed: u64, key_len in 1usize..10,
        width in widths(), keys in prop::collection::vec(any::<u32>(), 2..12), split in 1usize..11,
    ) {
        let split = split.min(keys.len() - 1);
        let (store, lut, members) = populated(files, bits, seed, key_len, width, &keys[..split]);
        let before: Vec<BTreeSet<KeyString>> = members
            .iter()
            .map(|(c, _)| lut.retrieve(&store, c, RetrieveOptions::default()).unwrap().candidates)
            .collect();
        for (i, &k) in keys[split..].iter().enumerate() {
            let cred = Credential::new(format!("late{i}"), "x").unwrap();
            let key = KeyString::new(format!("{:032b}", k)[32 - key_len..].to_string(), Radix::Binary, key_len).unwrap();
            lut.insert(&store, &cred, &key, &actor()).unwrap();
        }
        for ((c, _), old) in members.iter().zip(before) {
            let now = lut.retrieve(&store, c, RetrieveOptions::default()).unwrap().candidates;
            prop_assert!(now.is_superset(&old));
        }
    }

    #[test]
    fn wildcard_over_unavailable_files_is_a_superset(
        files in 2usize..8, bits in 32u64..512, seed: u64, key_len in 1usize..10,
        width in widths(), keys in prop::collection::vec(any::<u32>(), 1..10), down in any::<prop::sample::Index>(),
    ) {
        let (store, lut, members) = populated(files, bits, seed, key_len, width, &keys);
        let plan = FaultPlan { unavailable: [FileId(down.index(files) as u32)].into(), ..FaultPlan::default() };
        for (cred, key) in &members {
            let healthy = lut.retrieve(&store, cred, RetrieveOptions::default()).unwrap().candidates;
            store.apply_faults(&plan).unwrap();
            let wild = lut.retrieve(&store, cred, RetrieveOptions::wildcard());
            let strict = lut.retrieve(&store, cred, RetrieveOptions::default()).unwrap().candidates;
            store.clear_faults();
            // Every check landing on the down partition is reported, not guessed.
            let wild = match wild {
                Err(bflut::BflutError::DegenerateWildcard) => continue,
                other => other.unwrap().candidates,
            };
            prop_assert!(wild.contains(key));
            prop_assert!(wild.is_superset(&healthy));
            prop_assert!(healthy.is_superset(&strict));
        }
    }

    #[test]
    fn merge_is_a_semilattice(
        bits in 1u64..400,
        a in prop::collection::vec(any::<u64>(), 0..64),
        b in prop::collection::vec(any::<u64>(), 0..64),
        c in prop::collection::vec(any::<u64>(), 0..64),
        va in 1u64..20, vb in 1u64..20, vc in 1u64..20,
    ) {
        let (a, b, c) = (bitfile(bits, &a, va), bitfile(bits, &b, vb), bitfile(bits, &c, vc));
        let m = |x: &BitFile, y: &BitFile| merge_replicas(x, y).unwrap();
        prop_assert!(m(&a, &b).same_bits(&m(&b, &a)));
        prop_assert!(m(&m(&a, &b), &c).same_bits(&m(&a, &m(&b, &c))));
        prop_assert!(m(&a, &a).same_bits(&a));
        let ab = m(&a, &b);
        prop_assert!(ab.version >= a.version.max(b.version));
        prop_assert!(ab.count_ones() >= a.count_ones().max(b.count_ones()));
    }

    #[test]
    fn nearest_is_minimal_by_exact_arithmetic(
        addrs in prop::collection::btree_set(address(), 1..20), target in address(),
    ) {
        let mut reg = FileRegistry::new();
        for (i, a) in addrs.iter().enumerate() {
            reg.insert(*a, format!("f{i}"));
        }
        let (got, _) = reg.nearest(&target).unwrap();
        let t = BigUint::from_bytes_be(target.as_bytes());
        let dist = |a: &HashAddress| {
            let x = BigUint::from_bytes_be(a.as_bytes());
            if x >= t { &x - &t } else { &t - &x }
        };
        let best = addrs.iter().min_by(|a, b| dist(a).cmp(&dist(b)).then(a.cmp(b))).unwrap();
        prop_assert_eq!(got, best);
    }

    #[test]
    fn fp_is_monotone(n in 1u64..2_000_000, f_scale in 1.0f64..400.0) {
        let f = 2_097_152.0 * f_scale;
        let base = analysis::fp_probability(&AnalysisParams::new(n, f, 64, 4)).unwrap().log10;
        let more_keys = analysis::fp_probability(&AnalysisParams::new(n + 1000, f, 64, 4)).unwrap().log10;
        let more_bits = analysis::fp_probability(&AnalysisParams::new(n, f * 1.01, 64, 4)).unwrap().log10;
        prop_assert!(more_keys >= base);
        prop_assert!(more_bits <= base);
    }

    #[test]
    fn save_open_preserves_every_bit(
        files in 1usize..6, bits in 1u64..300, seed: u64,
        writes in prop::collection::vec((any::<u32>(), any::<u64>()), 0..40),
    ) {
        let store = PartitionStore::init(files, bits, seed).unwrap();
        for (f, p) in &writes {
            bflut::BitStore::set_bits(&store, FileId(f % files as u32), &[p % bits], &actor()).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        store.save(dir.path()).unwrap();
        let back = PartitionStore::open(dir.path()).unwrap();
        for i in 0..files as u32 {
            prop_assert_eq!(store.snapshot_file(FileId(i)).unwrap(), back.snapshot_file(FileId(i)).unwrap());
        }
    }
}

#[test]
fn direct_routing_agrees_with_registry_on_ten_thousand_addresses() {
    use rand::{RngCore, SeedableRng};
    let store = PartitionStore::init(64, 64, 21).unwrap();
    let snap = store.registry_snapshot();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10_000 {
        let mut b = [0u8; 32];
        rng.fill_bytes(&mut b);
        let a = HashAddress::from_bytes(b);
        assert_eq!(store.route_direct(&snap, &a).unwrap(), bflut::BitStore::nearest_file(&store, &a).unwrap());
    }
}
