//! On-disk layout of a store directory.
//!
//! ```text
//! registry.txt        sorted `<64-hex address> <name>` lines
//! faults.txt          optional fault plan (`erased = ...`, `unavailable = ...`)
//! <name>.bin          one per partition (erased ones hold an all-zero bitmap):
//!   0..4    magic "BFLP"
//!   4..6    format version, u16 LE
//!   6..8    reserved, zero
//!   8..12   bits per file M, u32 LE
//!   12..16  file id, u32 LE
//!   16..    ceil(M/8) bitmap bytes, bit i at byte i/8, bit i%8 (LSB first)
//!   then    version counter, u64 LE
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{BitFile, FaultPlan, FileId, FileRegistry, PartitionStore};
use crate::address::HashAddress;
use crate::error::StoreError;

pub const PARTITION_MAGIC: [u8; 4] = *b"BFLP";
pub const PARTITION_FORMAT_VERSION: u16 = 1;

const REGISTRY_FILE: &str = "registry.txt";
const FAULTS_FILE: &str = "faults.txt";

impl BitFile {
    pub fn encode(&self) -> Result<Vec<u8>, StoreError> {
        let bits = u32::try_from(self.bits())
            .map_err(|_| StoreError::Format(format!("{} bits does not fit the u32 header field", self.bits())))?;
        let bitmap = self.to_le_bytes();
        let mut out = Vec::with_capacity(16 + bitmap.len() + 8);
        out.extend_from_slice(&PARTITION_MAGIC);
        out.extend_from_slice(&PARTITION_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(&self.file_id.0.to_le_bytes());
        out.extend_from_slice(&bitmap);
        out.extend_from_slice(&self.version.to_le_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8], name: impl Into<String>) -> Result<Self, StoreError> {
        let bad = |m: &str| StoreError::Format(format!("partition file: {m}"));
        if bytes.len() < 24 {
            return Err(bad("truncated header"));
        }
        if bytes[0..4] != PARTITION_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != PARTITION_FORMAT_VERSION {
            return Err(bad(&format!("unsupported format version {version}")));
        }
        let bits = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as u64;
        let file_id = FileId(u32::from_le_bytes(bytes[12..16].try_into().unwrap()));
        let map_len = bits.div_ceil(8) as usize;
        if bytes.len() != 16 + map_len + 8 {
            return Err(bad("length does not match header"));
        }
        let words = BitFile::words_from_le_bytes(&bytes[16..16 + map_len], bits);
        let content_version = u64::from_le_bytes(bytes[16 + map_len..].try_into().unwrap());
        Ok(BitFile::from_parts(file_id, name.into(), content_version, bits, words))
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

impl PartitionStore {
    /// Writes the registry, every live partition and the fault plan.
    pub fn save(&self, dir: &Path) -> Result<(), StoreError> {
        fs::create_dir_all(dir)?;
        write_atomic(&dir.join(REGISTRY_FILE), self.registry.to_text().as_bytes())?;
        let plan = self.fault_plan();
        for p in &self.partitions {
            let path = dir.join(format!("{}.bin", p.name));
            let bytes = {
                let _guard = p.write.lock();
                BitFile::from_parts(
                    p.id,
                    p.name.clone(),
                    p.version.load(std::sync::atomic::Ordering::Acquire),
                    self.bits_per_file,
                    p.bitmap.snapshot_words(),
                )
                .encode()?
            };
            write_atomic(&path, &bytes)?;
        }
        let faults = dir.join(FAULTS_FILE);
        if plan.is_empty() {
            if faults.exists() {
                fs::remove_file(faults)?;
            }
        } else {
            write_atomic(&faults, plan.to_text().as_bytes())?;
        }
        Ok(())
    }

    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        let registry = FileRegistry::from_text(&fs::read_to_string(dir.join(REGISTRY_FILE))?)?;
        let faults_path = dir.join(FAULTS_FILE);
        let plan = if faults_path.exists() {
            FaultPlan::parse(&fs::read_to_string(&faults_path)?)
                .map_err(|e| StoreError::Format(format!("{FAULTS_FILE}: {e}")))?
        } else {
            FaultPlan::default()
        };

        let mut loaded: Vec<Option<(BitFile, HashAddress)>> = vec![None; registry.len()];
        let mut bits_per_file = None;
        for (addr, name) in registry.iter() {
            let path = dir.join(format!("{name}.bin"));
            let file = BitFile::decode(&fs::read(&path)?, name.clone())?;
            match bits_per_file {
                None => bits_per_file = Some(file.bits()),
                Some(b) if b != file.bits() => {
                    return Err(StoreError::Format(format!("{name}: inconsistent partition size")))
                }
                _ => {}
            }
            let slot = loaded
                .get_mut(file.file_id.0 as usize)
                .ok_or_else(|| StoreError::Format(format!("{name}: file id out of range")))?;
            if slot.is_some() {
                return Err(StoreError::Format(format!("{name}: duplicate file id")));
            }
            *slot = Some((file, *addr));
        }
        let bits_per_file =
            bits_per_file.ok_or_else(|| StoreError::Format("store has no readable partitions".into()))?;
        let files = loaded.into_iter().map(|s| s.ok_or_else(|| StoreError::Format("partition ids are not dense".into())))
            .collect::<Result<Vec<_>, _>>()?;
        let store = Self::assemble(bits_per_file, registry, files)?;
        store.apply_faults(&plan)?;
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{ActorId, BitStore};

    #[test]
    fn header_layout_is_bit_exact() {
        let mut f = BitFile::new(FileId(7), "part-00007", 20);
        f.set(&[0, 19]).unwrap();
        let bytes = f.encode().unwrap();
        assert_eq!(&bytes[0..4], b"BFLP");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &20u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &7u32.to_le_bytes());
        assert_eq!(&bytes[16..19], &[0b0000_0001, 0, 0b0000_1000]);
        assert_eq!(&bytes[19..27], &2u64.to_le_bytes());
        assert_eq!(bytes.len(), 27);
        assert_eq!(BitFile::decode(&bytes, "part-00007").unwrap(), f);
    }

    #[test]
    fn decode_rejects_corruption() {
        let bytes = BitFile::new(FileId(0), "p", 64).encode().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(BitFile::decode(&bad, "p").is_err());
        assert!(BitFile::decode(&bytes[..bytes.len() - 1], "p").is_err());
        let mut bad = bytes;
        bad[4] = 9;
        assert!(BitFile::decode(&bad, "p").is_err());
    }

    #[test]
    fn save_and_open_round_trip_with_faults() {
        let dir = tempfile::tempdir().unwrap();
        let s = PartitionStore::init(6, 100, 11).unwrap();
        let a = ActorId::new("x");
        s.set_bits(FileId(1), &[3, 99], &a).unwrap();
        s.set_bits(FileId(5), &[0], &a).unwrap();
        s.apply_faults(&FaultPlan::parse("erased = 2\nunavailable = 4").unwrap()).unwrap();
        s.save(dir.path()).unwrap();
        let erased = BitFile::decode(&std::fs::read(dir.path().join("part-00002.bin")).unwrap(), "p").unwrap();
        assert_eq!(erased.count_ones(), 0);

        let t = PartitionStore::open(dir.path()).unwrap();
        assert_eq!(t.registry(), s.registry());
        assert_eq!(t.fault_plan(), s.fault_plan());
        assert!(t.check_bits(FileId(1), &[3, 99]).unwrap());
        assert_eq!(t.version(FileId(1)).unwrap(), 2);
        assert_eq!(t.count_ones(), 3);
        let reg_text = std::fs::read_to_string(dir.path().join("registry.txt")).unwrap();
        assert_eq!(reg_text.lines().count(), 6);
    }
}
