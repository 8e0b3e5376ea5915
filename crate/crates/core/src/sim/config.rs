use std::fmt::Write as _;
use std::path::Path;

use crate::encoding::{EncodingParams, Radix};
use crate::kv::KvDoc;
use crate::store::FaultPlan;

use super::SimError;

/// Where the inserted population's credentials come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserSource {
    /// Seeded random usernames and passwords.
    Random,
    /// The ten fixed accounts of the per-user access table.
    Fixed,
}

/// The ten fixed (username, password) pairs of the per-user access table.
pub const FIXED_USERS: [(&str, &str); 10] = [
    ("alice12", "securePass1!"),
    ("bob_smith", "bobRocks42@"),
    ("charlie.dev", "charlieCode99$"),
    ("david_w", "DavidPass123*"),
    ("emma.l", "emmaLovesCats!"),
    ("frank_t", "FrankStrongP@ss"),
    ("grace.hopper", "graceCode42#"),
    ("henry_m", "HenrySafePass1!"),
    ("isabella_99", "BellaSecret$22"),
    ("jack_admin", "AdminJack#2024"),
];

/// Everything that determines an experiment. Two runs with equal configs
/// produce identical reports.
///
/// Text form (all keys optional except where noted by `validate`):
///
/// ```text
/// seed = 7
/// file_count = 50
/// bits_per_file = 4096
/// radix = 2
/// key_len = 12
/// segment_width = 16
/// population = 10
/// probe_count = 1000
/// replicates = 4
/// users = fixed           # or `random`
/// erased = 3, 17          # fault plan applied after insertion
/// unavailable = 4
/// erase_fractions = 0, 0.1, 0.5, 0.9
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub file_count: usize,
    pub bits_per_file: u64,
    pub radix: Radix,
    pub key_len: usize,
    pub segment_width: usize,
    /// Inserted (credential, key) pairs per replicate.
    pub population: usize,
    /// Fresh credentials probed for false positives per replicate.
    pub probe_count: usize,
    /// Independent stores built from the same seed on separate streams.
    pub replicates: usize,
    pub users: UserSource,
    pub faults: FaultPlan,
    pub erase_fractions: Vec<f64>,
}

const KEYS: &[&str] = &[
    "seed",
    "file_count",
    "bits_per_file",
    "radix",
    "key_len",
    "segment_width",
    "population",
    "probe_count",
    "replicates",
    "users",
    "erased",
    "unavailable",
    "erase_fractions",
];

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            file_count: 100,
            bits_per_file: 1 << 20,
            radix: Radix::Hex,
            key_len: 64,
            segment_width: 4,
            population: 10,
            probe_count: 100,
            replicates: 1,
            users: UserSource::Random,
            faults: FaultPlan::default(),
            erase_fractions: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    /// The per-user access experiment: ten fixed users, hex keys of 64
    /// digits, `file_count` partitions.
    pub fn fixed_users(seed: u64, file_count: usize) -> Self {
        Self {
            seed,
            file_count,
            population: FIXED_USERS.len(),
            users: UserSource::Fixed,
            ..Self::default()
        }
    }

    pub fn encoding(&self) -> Result<EncodingParams, SimError> {
        Ok(EncodingParams::new(self.radix, self.key_len, self.segment_width)?)
    }

    pub fn total_bits(&self) -> u64 {
        self.file_count as u64 * self.bits_per_file
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        for (name, v) in [
            ("file_count", self.file_count),
            ("population", self.population),
            ("probe_count", self.probe_count),
            ("replicates", self.replicates),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.bits_per_file == 0 || self.bits_per_file > u32::MAX as u64 {
            return bad(format!("bits_per_file must be in 1..=2^32-1, got {}", self.bits_per_file));
        }
        self.encoding()?;
        if self.users == UserSource::Fixed && self.population > FIXED_USERS.len() {
            return bad(format!("users = fixed supports at most {} users", FIXED_USERS.len()));
        }
        if let Some(f) = self.erase_fractions.iter().find(|f| !(**f >= 0.0 && f.is_finite())) {
            return bad(format!("erase fraction {f} is not a non-negative number"));
        }
        if let Some(id) = self.faults.erased.iter().chain(&self.faults.unavailable).find(|f| f.0 as usize >= self.file_count) {
            return bad(format!("fault plan names partition {id} but there are {}", self.file_count));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, SimError> {
        let doc = KvDoc::parse(text)?;
        doc.expect_only(KEYS)?;
        let d = Self::default();
        let radix = match doc.get::<u32>("radix")? {
            Some(b) => Radix::from_base(b)?,
            None => d.radix,
        };
        let users = match doc.raw("users") {
            None | Some("random") => UserSource::Random,
            Some("fixed") => UserSource::Fixed,
            Some(other) => return Err(SimError::Config(format!("users must be `random` or `fixed`, got {other:?}"))),
        };
        let cfg = Self {
            seed: doc.get("seed")?.unwrap_or(d.seed),
            file_count: doc.get("file_count")?.unwrap_or(d.file_count),
            bits_per_file: doc.get("bits_per_file")?.unwrap_or(d.bits_per_file),
            radix,
            key_len: doc.get("key_len")?.unwrap_or(d.key_len),
            segment_width: doc.get("segment_width")?.unwrap_or(d.segment_width),
            population: doc.get("population")?.unwrap_or(d.population),
            probe_count: doc.get("probe_count")?.unwrap_or(d.probe_count),
            replicates: doc.get("replicates")?.unwrap_or(d.replicates),
            users,
            faults: FaultPlan::from_doc(&doc)?,
            erase_fractions: doc.get_list("erase_fractions")?.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let list = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(", ");
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "file_count = {}", self.file_count);
        let _ = writeln!(out, "bits_per_file = {}", self.bits_per_file);
        let _ = writeln!(out, "radix = {}", self.radix.base());
        let _ = writeln!(out, "key_len = {}", self.key_len);
        let _ = writeln!(out, "segment_width = {}", self.segment_width);
        let _ = writeln!(out, "population = {}", self.population);
        let _ = writeln!(out, "probe_count = {}", self.probe_count);
        let _ = writeln!(out, "replicates = {}", self.replicates);
        let users = match self.users {
            UserSource::Random => "random",
            UserSource::Fixed => "fixed",
        };
        let _ = writeln!(out, "users = {users}");
        out.push_str(&self.faults.to_text());
        let _ = writeln!(out, "erase_fractions = {}", list(&mut self.erase_fractions.iter().map(|f| f.to_string())));
        out
    }
}
