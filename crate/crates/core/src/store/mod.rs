//! In-process analog of the distributed store: `file_count` partitions of
//! `bits_per_file` bits, an address registry for nearest-key routing, a
//! mutable-name table that always resolves to the newest partition version,
//! fault injection and per-actor write quotas.

mod bitfile;
mod faults;
mod limiter;
mod persist;
mod registry;

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, AtomicU8, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::address::HashAddress;
use crate::error::StoreError;

pub use bitfile::{merge_replicas, BitFile};
pub use faults::FaultPlan;
pub use limiter::{ActorId, Clock, ManualClock, RateLimiter, SystemClock, WritePolicy};
pub use persist::{PARTITION_FORMAT_VERSION, PARTITION_MAGIC};
pub use registry::{FileRegistry, RegistrySnapshot};

use bitfile::AtomicBitmap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FileId(pub u32);

impl fmt::Display for FileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteOutcome {
    /// Version published after the write (unchanged for a no-op).
    pub version: u64,
    /// Bits that went from 0 to 1.
    pub newly_set: u32,
}

/// The operations bit encoding needs from a partitioned store.
pub trait BitStore: Sync {
    fn bits_per_file(&self) -> u64;

    /// Partition whose registry address is nearest to `addr`.
    fn nearest_file(&self, addr: &HashAddress) -> Result<FileId, StoreError>;

    fn set_bits(&self, file: FileId, positions: &[u64], actor: &ActorId) -> Result<WriteOutcome, StoreError>;

    /// True iff every listed bit is set in the latest version.
    fn check_bits(&self, file: FileId, positions: &[u64]) -> Result<bool, StoreError>;

    /// False once every partition has been erased.
    fn has_live_files(&self) -> bool;
}

const LIVE: u8 = 0;
const UNAVAILABLE: u8 = 1;
const ERASED: u8 = 2;

#[derive(Debug)]
struct Partition {
    id: FileId,
    name: String,
    address: HashAddress,
    bitmap: AtomicBitmap,
    version: AtomicU64,
    state: AtomicU8,
    write: Mutex<()>,
}

impl Partition {
    fn ensure_readable(&self) -> Result<(), StoreError> {
        match self.state.load(Ordering::Acquire) {
            LIVE => Ok(()),
            UNAVAILABLE => Err(StoreError::Unavailable(self.id)),
            _ => Err(StoreError::Erased(self.id)),
        }
    }
}

/// Mutable name -> (partition, latest published version).
#[derive(Debug, Default)]
pub struct MutableNameTable {
    entries: HashMap<String, (FileId, u64)>,
}

impl MutableNameTable {
    pub fn resolve(&self, name: &str) -> Option<(FileId, u64)> {
        self.entries.get(name).copied()
    }

    /// Records `version` unless a newer one is already published.
    pub fn publish(&mut self, name: &str, file: FileId, version: u64) {
        match self.entries.get_mut(name) {
            Some(slot) if slot.1 >= version => {}
            Some(slot) => *slot = (file, version),
            None => {
                self.entries.insert(name.to_string(), (file, version));
            }
        }
    }
}

pub struct PartitionStore {
    bits_per_file: u64,
    partitions: Vec<Partition>,
    registry: FileRegistry,
    names: RwLock<MutableNameTable>,
    generation: AtomicU64,
    limiter: Option<RateLimiter>,
}

pub fn partition_name(id: FileId) -> String {
    format!("part-{:05}", id.0)
}

impl PartitionStore {
    /// `file_count` empty partitions at version 1 with distinct registry
    /// addresses drawn from a ChaCha8 stream seeded with `seed`.
    pub fn init(file_count: usize, bits_per_file: u64, seed: u64) -> Result<Self, StoreError> {
        if file_count == 0 {
            return Err(StoreError::InvalidConfig("file_count must be at least 1".into()));
        }
        if file_count > u32::MAX as usize {
            return Err(StoreError::InvalidConfig("file_count does not fit in 32 bits".into()));
        }
        if bits_per_file == 0 {
            return Err(StoreError::InvalidConfig("bits_per_file must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut registry = FileRegistry::new();
        let mut files = Vec::with_capacity(file_count);
        for i in 0..file_count {
            let id = FileId(i as u32);
            let name = partition_name(id);
            let mut attempts = 0;
            let address = loop {
                let mut bytes = [0u8; 32];
                rng.fill_bytes(&mut bytes);
                let addr = HashAddress::from_bytes(bytes);
                if registry.insert(addr, name.clone()) {
                    break addr;
                }
                attempts += 1;
                if attempts > 64 {
                    return Err(StoreError::AddressExhaustion(file_count));
                }
            };
            files.push((BitFile::new(id, name, bits_per_file), address));
        }
        Self::assemble(bits_per_file, registry, files)
    }

    fn assemble(
        bits_per_file: u64,
        registry: FileRegistry,
        files: impl IntoIterator<Item = (BitFile, HashAddress)>,
    ) -> Result<Self, StoreError> {
        let mut names = MutableNameTable::default();
        let mut partitions = Vec::new();
        for (i, (file, address)) in files.into_iter().enumerate() {
            if file.file_id.0 as usize != i {
                return Err(StoreError::Format(format!("partition ids not dense at {}", file.file_id)));
            }
            if file.bits() != bits_per_file {
                return Err(StoreError::Format(format!(
                    "partition {} has {} bits, expected {bits_per_file}",
                    file.file_id,
                    file.bits()
                )));
            }
            names.publish(&file.name, file.file_id, file.version);
            partitions.push(Partition {
                id: file.file_id,
                bitmap: AtomicBitmap::from_words(file.words()),
                version: AtomicU64::new(file.version),
                name: file.name,
                address,
                state: AtomicU8::new(LIVE),
                write: Mutex::new(()),
            });
        }
        Ok(Self {
            bits_per_file,
            partitions,
            registry,
            names: RwLock::new(names),
            generation: AtomicU64::new(1),
            limiter: None,
        })
    }

    pub fn with_write_policy(mut self, policy: WritePolicy, clock: Arc<dyn Clock>) -> Self {
        self.limiter = Some(RateLimiter::new(policy, clock));
        self
    }

    pub fn file_count(&self) -> usize {
        self.partitions.len()
    }

    /// Total capacity in bits across all partitions.
    pub fn total_bits(&self) -> u64 {
        self.bits_per_file * self.partitions.len() as u64
    }

    pub fn registry(&self) -> &FileRegistry {
        &self.registry
    }

    pub fn generation(&self) -> u64 {
        self.generation.load(Ordering::Acquire)
    }

    pub fn address_of(&self, file: FileId) -> Result<HashAddress, StoreError> {
        Ok(self.partition(file)?.address)
    }

    pub fn name_of(&self, file: FileId) -> Result<&str, StoreError> {
        Ok(&self.partition(file)?.name)
    }

    /// Latest `(file, version)` published under a mutable name.
    pub fn resolve(&self, name: &str) -> Option<(FileId, u64)> {
        self.names.read().resolve(name)
    }

    pub fn version(&self, file: FileId) -> Result<u64, StoreError> {
        Ok(self.partition(file)?.version.load(Ordering::Acquire))
    }

    fn partition(&self, file: FileId) -> Result<&Partition, StoreError> {
        self.partitions.get(file.0 as usize).ok_or(StoreError::UnknownFile(file))
    }

    fn resolve_routed(&self, name: &str) -> Result<FileId, StoreError> {
        let (file, _) = self
            .resolve(name)
            .ok_or_else(|| StoreError::Format(format!("name {name} is not published")))?;
        self.partition(file)?.ensure_readable()?;
        Ok(file)
    }

    fn check_range(&self, positions: &[u64]) -> Result<(), StoreError> {
        match positions.iter().find(|&&p| p >= self.bits_per_file) {
            Some(&p) => Err(StoreError::PositionOutOfRange { position: p, bits: self.bits_per_file }),
            None => Ok(()),
        }
    }

    /// Copy of a partition's current version.
    pub fn snapshot_file(&self, file: FileId) -> Result<BitFile, StoreError> {
        let p = self.partition(file)?;
        p.ensure_readable()?;
        let _guard = p.write.lock();
        Ok(BitFile::from_parts(
            p.id,
            p.name.clone(),
            p.version.load(Ordering::Acquire),
            self.bits_per_file,
            p.bitmap.snapshot_words(),
        ))
    }

    /// Merges a replica into the stored partition and publishes the result.
    pub fn absorb_replica(&self, replica: &BitFile) -> Result<u64, StoreError> {
        let p = self.partition(replica.file_id)?;
        p.ensure_readable()?;
        let _guard = p.write.lock();
        let current = BitFile::from_parts(
            p.id,
            p.name.clone(),
            p.version.load(Ordering::Acquire),
            self.bits_per_file,
            p.bitmap.snapshot_words(),
        );
        let merged = merge_replicas(&current, replica)?;
        for (i, w) in merged.words().iter().enumerate() {
            let mut word = *w;
            while word != 0 {
                let bit = word.trailing_zeros() as u64;
                p.bitmap.set(i as u64 * 64 + bit);
                word &= word - 1;
            }
        }
        p.version.store(merged.version, Ordering::Release);
        self.names.write().publish(&p.name, p.id, merged.version);
        Ok(merged.version)
    }

    /// Set bits over all live partitions.
    pub fn count_ones(&self) -> u64 {
        self.partitions
            .iter()
            .filter(|p| p.state.load(Ordering::Acquire) != ERASED)
            .map(|p| p.bitmap.count_ones())
            .sum()
    }

    pub fn apply_faults(&self, plan: &FaultPlan) -> Result<(), StoreError> {
        for &id in plan.erased.iter().chain(&plan.unavailable) {
            self.partition(id)?;
        }
        let mut registry_changed = false;
        for &id in &plan.erased {
            let p = self.partition(id)?;
            let _guard = p.write.lock();
            if p.state.swap(ERASED, Ordering::AcqRel) != ERASED {
                p.bitmap.clear_all();
                registry_changed = true;
            }
        }
        for &id in &plan.unavailable {
            let p = self.partition(id)?;
            let _ = p.state.compare_exchange(LIVE, UNAVAILABLE, Ordering::AcqRel, Ordering::Acquire);
        }
        if registry_changed {
            self.generation.fetch_add(1, Ordering::AcqRel);
        }
        Ok(())
    }

    /// Brings unavailable partitions back. Erasure is permanent.
    pub fn clear_faults(&self) {
        for p in &self.partitions {
            let _ = p.state.compare_exchange(UNAVAILABLE, LIVE, Ordering::AcqRel, Ordering::Acquire);
        }
    }

    pub fn fault_plan(&self) -> FaultPlan {
        let mut plan = FaultPlan::default();
        for p in &self.partitions {
            match p.state.load(Ordering::Acquire) {
                ERASED => {
                    plan.erased.insert(p.id);
                }
                UNAVAILABLE => {
                    plan.unavailable.insert(p.id);
                }
                _ => {}
            }
        }
        plan
    }

    pub fn registry_snapshot(&self) -> RegistrySnapshot {
        self.registry.snapshot(self.generation())
    }

    /// Routes with a caller-held registry copy. The copy must match the
    /// current registry generation.
    pub fn route_direct(&self, snapshot: &RegistrySnapshot, addr: &HashAddress) -> Result<FileId, StoreError> {
        let current = self.generation();
        if snapshot.generation != current || !snapshot.verify() {
            return Err(StoreError::StaleRegistry { snapshot: snapshot.generation, current });
        }
        let name = snapshot.nearest(addr).ok_or(StoreError::NoLiveFiles)?;
        self.resolve_routed(name)
    }

    /// Fraction of the address space routed to each partition, in id order.
    pub fn routing_cells(&self) -> Vec<f64> {
        let sorted: Vec<(f64, &String)> =
            self.registry.iter().map(|(a, n)| (a.unit_fraction(), n)).collect();
        let mut cells = vec![0.0; self.partitions.len()];
        for (i, (pos, name)) in sorted.iter().enumerate() {
            let lo = if i == 0 { 0.0 } else { (sorted[i - 1].0 + pos) / 2.0 };
            let hi = if i + 1 == sorted.len() { 1.0 } else { (pos + sorted[i + 1].0) / 2.0 };
            if let Some((file, _)) = self.resolve(name) {
                cells[file.0 as usize] = hi - lo;
            }
        }
        cells
    }
}

impl BitStore for PartitionStore {
    fn bits_per_file(&self) -> u64 {
        self.bits_per_file
    }

    fn nearest_file(&self, addr: &HashAddress) -> Result<FileId, StoreError> {
        let (_, name) = self.registry.nearest(addr).ok_or(StoreError::NoLiveFiles)?;
        self.resolve_routed(name)
    }

    fn set_bits(&self, file: FileId, positions: &[u64], actor: &ActorId) -> Result<WriteOutcome, StoreError> {
        let p = self.partition(file)?;
        p.ensure_readable()?;
        self.check_range(positions)?;
        if let Some(limiter) = &self.limiter {
            if !limiter.try_acquire(actor) {
                return Err(StoreError::RateLimited { actor: actor.to_string() });
            }
        }
        let _guard = p.write.lock();
        // Erasure takes the same lock; re-check under it.
        p.ensure_readable()?;
        let newly_set = positions.iter().filter(|&&pos| p.bitmap.set(pos)).count() as u32;
        let version = if newly_set > 0 {
            let v = p.version.fetch_add(1, Ordering::AcqRel) + 1;
            self.names.write().publish(&p.name, p.id, v);
            v
        } else {
            p.version.load(Ordering::Acquire)
        };
        Ok(WriteOutcome { version, newly_set })
    }

    fn check_bits(&self, file: FileId, positions: &[u64]) -> Result<bool, StoreError> {
        let p = self.partition(file)?;
        p.ensure_readable()?;
        self.check_range(positions)?;
        Ok(positions.iter().all(|&pos| p.bitmap.get(pos)))
    }

    fn has_live_files(&self) -> bool {
        self.partitions.iter().any(|p| p.state.load(Ordering::Acquire) != ERASED)
    }
}

impl fmt::Debug for PartitionStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PartitionStore")
            .field("file_count", &self.partitions.len())
            .field("bits_per_file", &self.bits_per_file)
            .field("generation", &self.generation())
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    fn actor() -> ActorId {
        ActorId::new("t")
    }

    #[test]
    fn single_file_takes_every_route() {
        let s = PartitionStore::init(1, 8, 1).unwrap();
        for v in [0u128, 1, u128::MAX] {
            assert_eq!(s.nearest_file(&HashAddress::from_u128(v)).unwrap(), FileId(0));
        }
        assert_eq!(s.nearest_file(&HashAddress::MAX).unwrap(), FileId(0));
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = PartitionStore::init(20, 64, 99).unwrap();
        let b = PartitionStore::init(20, 64, 99).unwrap();
        let c = PartitionStore::init(20, 64, 100).unwrap();
        assert_eq!(a.registry(), b.registry());
        assert_ne!(a.registry(), c.registry());
        assert_eq!(a.registry().len(), 20);
    }

    #[test]
    fn capacity_matches_configuration() {
        let s = PartitionStore::init(150, 1 << 10, 0).unwrap();
        assert_eq!(s.total_bits(), 150 << 10);
        assert!(PartitionStore::init(0, 8, 0).is_err());
        assert!(PartitionStore::init(1, 0, 0).is_err());
    }

    #[test]
    fn exact_address_routes_to_its_file() {
        let s = PartitionStore::init(30, 64, 5).unwrap();
        for id in 0..30 {
            let addr = s.address_of(FileId(id)).unwrap();
            assert_eq!(s.nearest_file(&addr).unwrap(), FileId(id));
        }
    }

    #[test]
    fn set_and_check_with_versioning() {
        let s = PartitionStore::init(3, 128, 0).unwrap();
        let f = FileId(1);
        assert!(!s.check_bits(f, &[5, 6]).unwrap());
        let w = s.set_bits(f, &[5, 6], &actor()).unwrap();
        assert_eq!(w, WriteOutcome { version: 2, newly_set: 2 });
        assert!(s.check_bits(f, &[5, 6]).unwrap());
        assert_eq!(s.resolve("part-00001"), Some((f, 2)));
        let again = s.set_bits(f, &[6, 5], &actor()).unwrap();
        assert_eq!(again, WriteOutcome { version: 2, newly_set: 0 });
        assert!(matches!(
            s.set_bits(f, &[128], &actor()),
            Err(StoreError::PositionOutOfRange { .. })
        ));
    }

    #[test]
    fn concurrent_disjoint_writes_union() {
        let s = PartitionStore::init(1, 4096, 0).unwrap();
        std::thread::scope(|scope| {
            for t in 0..4u64 {
                let s = &s;
                scope.spawn(move || {
                    let a = ActorId::new(format!("w{t}"));
                    for i in 0..256 {
                        s.set_bits(FileId(0), &[t * 1024 + i], &a).unwrap();
                    }
                });
            }
        });
        assert_eq!(s.count_ones(), 1024);
        assert_eq!(s.version(FileId(0)).unwrap(), 1025);
    }

    #[test]
    fn rate_limited_after_quota() {
        let clock = Arc::new(ManualClock::default());
        let policy = WritePolicy { max_writes_per_actor_per_window: 2, window: Duration::from_secs(60) };
        let s = PartitionStore::init(2, 64, 0).unwrap().with_write_policy(policy, clock.clone());
        let a = actor();
        s.set_bits(FileId(0), &[1], &a).unwrap();
        s.set_bits(FileId(0), &[2], &a).unwrap();
        assert!(matches!(s.set_bits(FileId(0), &[3], &a), Err(StoreError::RateLimited { .. })));
        assert!(!s.check_bits(FileId(0), &[3]).unwrap());
        clock.advance(Duration::from_secs(60));
        s.set_bits(FileId(0), &[3], &a).unwrap();
    }

    #[test]
    fn faults_are_distinguishable() {
        let s = PartitionStore::init(4, 64, 3).unwrap();
        s.set_bits(FileId(0), &[1], &actor()).unwrap();
        let plan = FaultPlan::parse("erased = 0\nunavailable = 2").unwrap();
        let generation = s.generation();
        s.apply_faults(&plan).unwrap();
        assert_eq!(s.generation(), generation + 1);
        assert!(matches!(s.check_bits(FileId(0), &[1]), Err(StoreError::Erased(_))));
        assert!(matches!(s.check_bits(FileId(2), &[1]), Err(StoreError::Unavailable(_))));
        assert!(matches!(s.set_bits(FileId(0), &[1], &actor()), Err(StoreError::Erased(_))));
        assert_eq!(s.fault_plan(), plan);
        s.clear_faults();
        assert!(s.check_bits(FileId(2), &[1]).is_ok());
        assert!(matches!(s.check_bits(FileId(0), &[1]), Err(StoreError::Erased(_))));
        assert!(s.has_live_files());
    }

    #[test]
    fn routing_into_erased_cell_reports_erasure() {
        let s = PartitionStore::init(5, 64, 8).unwrap();
        let victim = FileId(3);
        let addr = s.address_of(victim).unwrap();
        s.apply_faults(&FaultPlan { erased: [victim].into(), ..Default::default() }).unwrap();
        assert!(matches!(s.nearest_file(&addr), Err(StoreError::Erased(f)) if f == victim));
    }

    #[test]
    fn direct_routing_detects_stale_snapshot() {
        let s = PartitionStore::init(10, 64, 2).unwrap();
        let snap = s.registry_snapshot();
        let addr = s.address_of(FileId(4)).unwrap();
        assert_eq!(s.route_direct(&snap, &addr).unwrap(), FileId(4));
        s.apply_faults(&FaultPlan { erased: [FileId(4)].into(), ..Default::default() }).unwrap();
        assert!(matches!(s.route_direct(&snap, &addr), Err(StoreError::StaleRegistry { .. })));
        let fresh = s.registry_snapshot();
        assert!(matches!(s.route_direct(&fresh, &addr), Err(StoreError::Erased(_))));
    }

    #[test]
    fn absorb_replica_merges_and_publishes() {
        let s = PartitionStore::init(2, 256, 0).unwrap();
        s.set_bits(FileId(1), &[1], &actor()).unwrap();
        let mut replica = s.snapshot_file(FileId(1)).unwrap();
        replica.set(&[200]).unwrap();
        s.set_bits(FileId(1), &[2], &actor()).unwrap();
        let v = s.absorb_replica(&replica).unwrap();
        assert_eq!(v, 4);
        assert!(s.check_bits(FileId(1), &[1, 2, 200]).unwrap());
        assert_eq!(s.resolve("part-00001"), Some((FileId(1), 4)));
    }

    #[test]
    fn routing_cells_cover_the_line() {
        let s = PartitionStore::init(17, 8, 4).unwrap();
        let total: f64 = s.routing_cells().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
