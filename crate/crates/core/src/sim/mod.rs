//! Seeded experiment driver: builds stores, inserts populations, retrieves,
//! probes for false positives and injects erasures.
//!
//! Replicate `r` of a config draws everything from a ChaCha8 generator
//! seeded with `config.seed` on stream `r`, so replicates are independent
//! and each one is reproducible on its own.

mod config;
pub mod oracle;
pub mod report;

use std::time::{Duration, Instant};

use rand::distributions::Alphanumeric;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use config::{ExperimentConfig, UserSource, FIXED_USERS};
pub use oracle::{brute_force_oracle, OracleSnapshot, ORACLE_MAX_KEYS};

use crate::analysis::{self, FalsePositive};
use crate::encoding::{Credential, KeyString};
use crate::error::{EncodingError, StoreError};
use crate::kv::KvError;
use crate::lut::{Bflut, BflutError, RetrieveOptions};
use crate::store::{ActorId, FaultPlan, FileId, PartitionStore};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("config: {0}")]
    Kv(#[from] KvError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Search(#[from] BflutError),
    #[error("false negative: replicate {replicate}, user {user}")]
    FalseNegative { replicate: usize, user: String },
    #[error("key space of {size} keys exceeds the oracle limit of {limit}")]
    OracleInfeasible { size: f64, limit: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One inserted account.
#[derive(Debug, Clone)]
pub struct Member {
    pub credential: Credential,
    pub key: KeyString,
}

/// A store with its population inserted, plus the generator state that
/// follows insertion.
pub struct Replicate {
    pub index: usize,
    pub store: PartitionStore,
    pub members: Vec<Member>,
    pub rng: ChaCha8Rng,
}

fn random_text<R: Rng>(rng: &mut R, len: usize) -> String {
    rng.sample_iter(&Alphanumeric).take(len).map(char::from).collect()
}

fn random_credential<R: Rng>(rng: &mut R, tag: &str) -> Credential {
    let user = format!("{tag}-{}", random_text(rng, 12));
    Credential::new(user, random_text(rng, 20)).expect("non-empty fields")
}

/// Builds replicate `index` of `cfg` and inserts its population.
pub fn build_replicate(cfg: &ExperimentConfig, index: usize) -> Result<Replicate, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let store = PartitionStore::init(cfg.file_count, cfg.bits_per_file, rng.gen())?;
    let lut = Bflut::new(cfg.encoding()?);
    let mut members = Vec::with_capacity(cfg.population);
    for i in 0..cfg.population {
        let credential = match cfg.users {
            UserSource::Fixed => Credential::new(FIXED_USERS[i].0, FIXED_USERS[i].1)?,
            UserSource::Random => random_credential(&mut rng, "user"),
        };
        let key = KeyString::random(&mut rng, cfg.radix, cfg.key_len);
        lut.insert(&store, &credential, &key, &ActorId::new(credential.username()))?;
        members.push(Member { credential, key });
    }
    Ok(Replicate { index, store, members, rng })
}

/// Per-user retrieval statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct UserStats {
    pub replicate: usize,
    pub username: String,
    /// Distinct partitions touched by the retrieval.
    pub unique_files: usize,
    /// Bit checks made by the retrieval, repeats included.
    pub total_lookups: u64,
    pub candidates: usize,
    /// Expected distinct files for `total_lookups` uniform picks.
    pub expected_unique_uniform: f64,
    /// Same, weighted by the actual routing cell sizes of the store.
    pub expected_unique_cells: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpStats {
    pub probes: u64,
    /// Fresh credential plus random key passed every prefix check.
    pub false_positives: u64,
    /// Fresh credential retrieved a non-empty candidate set.
    pub nonempty_retrievals: u64,
}

impl FpStats {
    pub fn rate(&self) -> f64 {
        self.false_positives as f64 / self.probes as f64
    }

    /// Binomial standard error of `rate`, evaluated at probability `p`.
    pub fn sigma_at(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.probes as f64).sqrt()
    }

    /// Normal-approximation interval `rate ± 3σ`, clamped to [0, 1].
    pub fn interval_3sigma(&self) -> (f64, f64) {
        let r = self.rate();
        let s = self.sigma_at(r);
        ((r - 3.0 * s).max(0.0), (r + 3.0 * s).min(1.0))
    }

    /// Distance of the measured rate from `p` in units of its standard error.
    pub fn z_score(&self, p: f64) -> f64 {
        (self.rate() - p) / self.sigma_at(p)
    }

    pub fn nonempty_rate(&self) -> f64 {
        self.nonempty_retrievals as f64 / self.probes as f64
    }
}

#[derive(Debug, Clone)]
pub struct SimReport {
    pub config: ExperimentConfig,
    /// Sorted by (replicate, username).
    pub users: Vec<UserStats>,
    pub fp: FpStats,
    /// Closed form for `N = population`, `F = file_count · bits_per_file`,
    /// `b = key_len · positions_per_prefix`.
    pub closed_form: FalsePositive,
    /// Mean over replicates of `α^b` for the measured `α`.
    pub conditional_fp: f64,
    /// Set bits over all replicates.
    pub popcount: u64,
    /// Bits over all replicates.
    pub total_bits: u64,
    pub runtime: Duration,
}

impl SimReport {
    /// `popcount / F`.
    pub fn alpha(&self) -> f64 {
        self.popcount as f64 / self.total_bits as f64
    }

    pub fn mean_unique_files(&self) -> f64 {
        self.users.iter().map(|u| u.unique_files as f64).sum::<f64>() / self.users.len() as f64
    }
}

struct ReplicateOutcome {
    users: Vec<UserStats>,
    fp: FpStats,
    popcount: u64,
    conditional_fp: f64,
}

fn bits_per_key(cfg: &ExperimentConfig) -> Result<u64, SimError> {
    let p = cfg.encoding()?;
    Ok((p.key_len * p.positions_per_prefix()) as u64)
}

/// Budget for a single retrieval anywhere in the simulator. Population runs
/// fail with `SearchBudgetExceeded` past it; the erasure sweep counts it.
pub const SIM_MAX_LOOKUPS: u64 = 1 << 20;

fn run_replicate(cfg: &ExperimentConfig, index: usize) -> Result<ReplicateOutcome, SimError> {
    let Replicate { store, members, mut rng, .. } = build_replicate(cfg, index)?;
    let lut = Bflut::new(cfg.encoding()?);
    let popcount = store.count_ones();
    store.apply_faults(&cfg.faults)?;
    let opts = RetrieveOptions { wildcard_on_missing: !cfg.faults.is_empty(), max_lookups: SIM_MAX_LOOKUPS };
    let cells = store.routing_cells();

    let mut users = Vec::with_capacity(members.len());
    for m in &members {
        let result = lut.retrieve(&store, &m.credential, opts)?;
        if !result.candidates.contains(&m.key) {
            return Err(SimError::FalseNegative { replicate: index, user: m.credential.username().to_string() });
        }
        users.push(UserStats {
            replicate: index,
            username: m.credential.username().to_string(),
            unique_files: result.files_touched,
            total_lookups: result.lookups,
            candidates: result.candidates.len(),
            expected_unique_uniform: analysis::expected_unique_files(cfg.file_count as u64, result.lookups)
                .expect("file_count is positive"),
            expected_unique_cells: analysis::expected_unique_files_weighted(&cells, result.lookups),
        });
    }
    users.sort_by(|a, b| a.username.cmp(&b.username));

    let mut fp = FpStats { probes: cfg.probe_count as u64, false_positives: 0, nonempty_retrievals: 0 };
    for _ in 0..cfg.probe_count {
        let cred = random_credential(&mut rng, "probe");
        let key = KeyString::random(&mut rng, cfg.radix, cfg.key_len);
        if lut.contains(&store, &cred, &key, opts.wildcard_on_missing)? {
            fp.false_positives += 1;
        }
        if !lut.retrieve(&store, &cred, opts)?.candidates.is_empty() {
            fp.nonempty_retrievals += 1;
        }
    }

    let alpha = popcount as f64 / store.total_bits() as f64;
    let conditional_fp = alpha.powf(bits_per_key(cfg)? as f64);
    Ok(ReplicateOutcome { users, fp, popcount, conditional_fp })
}

/// Inserts the population, retrieves every key (aborting on a false
/// negative) and probes fresh credentials, for every replicate.
pub fn run_population(cfg: &ExperimentConfig) -> Result<SimReport, SimError> {
    cfg.validate()?;
    let started = Instant::now();
    let outcomes = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_replicate(cfg, r))
        .collect::<Result<Vec<_>, _>>()?;

    let b = bits_per_key(cfg)? as f64;
    let closed_form =
        analysis::steps_for_bits(cfg.population as f64, cfg.total_bits() as f64, b).false_positive();
    let mut fp = FpStats { probes: 0, false_positives: 0, nonempty_retrievals: 0 };
    let mut users = Vec::new();
    let mut popcount = 0;
    let mut conditional_fp = 0.0;
    for o in outcomes {
        fp.probes += o.fp.probes;
        fp.false_positives += o.fp.false_positives;
        fp.nonempty_retrievals += o.fp.nonempty_retrievals;
        popcount += o.popcount;
        conditional_fp += o.conditional_fp;
        users.extend(o.users);
    }
    Ok(SimReport {
        config: cfg.clone(),
        users,
        fp,
        closed_form,
        conditional_fp: conditional_fp / cfg.replicates as f64,
        popcount,
        total_bits: cfg.total_bits() * cfg.replicates as u64,
        runtime: started.elapsed(),
    })
}

/// One erasure fraction, aggregated over replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct ErasureRow {
    pub fraction: f64,
    pub erased_files: usize,
    /// Retrievals attempted (population times replicates).
    pub retrievals: u64,
    /// Inserted keys present in their own candidate set.
    pub recovered: u64,
    /// Candidates over all retrievals.
    pub candidates: u64,
    /// Candidates over all retrievals with nothing erased.
    pub baseline_candidates: u64,
    pub lookups: u64,
    pub wildcarded: u64,
    /// Retrievals that stopped at the lookup budget.
    pub exhausted: u64,
    /// Exhausted retrievals whose key still passes every wildcard check,
    /// i.e. belongs to the candidate set the search could not finish listing.
    pub exhausted_members: u64,
    /// Every partition was erased, so wildcard retrieval carries no information.
    pub degenerate: bool,
}

impl ErasureRow {
    /// Recovered over completed retrievals; `None` when none completed.
    pub fn recall(&self) -> Option<f64> {
        let done = self.retrievals - self.exhausted;
        (!self.degenerate && done > 0).then(|| self.recovered as f64 / done as f64)
    }

    /// Candidate-set growth relative to the fault-free store.
    pub fn inflation(&self) -> Option<f64> {
        (!self.degenerate && self.baseline_candidates > 0)
            .then(|| self.candidates as f64 / self.baseline_candidates as f64)
    }
}

#[derive(Debug, Clone)]
pub struct ErasureReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ErasureRow>,
    pub runtime: Duration,
}

/// Number of partitions a fraction erases. Fractions below 1 always leave
/// at least one partition.
pub fn erased_count(fraction: f64, file_count: usize) -> usize {
    if fraction >= 1.0 {
        file_count
    } else {
        ((fraction * file_count as f64).round() as usize).min(file_count - 1)
    }
}


fn sweep_replicate(cfg: &ExperimentConfig, index: usize, fractions: &[f64]) -> Result<Vec<ErasureRow>, SimError> {
    let lut = Bflut::new(cfg.encoding()?);
    let opts = RetrieveOptions { wildcard_on_missing: true, max_lookups: SIM_MAX_LOOKUPS };
    let base = build_replicate(cfg, index)?;
    let mut baseline = 0u64;
    for m in &base.members {
        baseline += lut.retrieve(&base.store, &m.credential, RetrieveOptions::default())?.candidates.len() as u64;
    }
    let mut order: Vec<u32> = (0..cfg.file_count as u32).collect();
    let mut rng = base.rng;
    order.shuffle(&mut rng);

    let mut rows = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let k = erased_count(fraction, cfg.file_count);
        let rep = build_replicate(cfg, index)?;
        let plan = FaultPlan { erased: order[..k].iter().map(|&i| FileId(i)).collect(), ..FaultPlan::default() };
        rep.store.apply_faults(&plan)?;
        let mut row = ErasureRow {
            fraction,
            erased_files: k,
            retrievals: rep.members.len() as u64,
            recovered: 0,
            candidates: 0,
            baseline_candidates: baseline,
            lookups: 0,
            wildcarded: 0,
            exhausted: 0,
            exhausted_members: 0,
            degenerate: false,
        };
        for m in &rep.members {
            match lut.retrieve(&rep.store, &m.credential, opts) {
                Ok(r) => {
                    row.recovered += r.candidates.contains(&m.key) as u64;
                    row.candidates += r.candidates.len() as u64;
                    row.lookups += r.lookups;
                    row.wildcarded += r.wildcarded;
                }
                Err(BflutError::DegenerateWildcard) => row.degenerate = true,
                Err(BflutError::SearchBudgetExceeded { .. }) => {
                    row.exhausted += 1;
                    row.exhausted_members += lut.contains(&rep.store, &m.credential, &m.key, true)? as u64;
                }
                Err(e) => return Err(e.into()),
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// For each fraction, erases that share of partitions (the same random
/// order for every fraction of a replicate) and retrieves every inserted
/// key in wildcard mode.
pub fn run_erasure_sweep(cfg: &ExperimentConfig, fractions: &[f64]) -> Result<ErasureReport, SimError> {
    cfg.validate()?;
    if let Some(f) = fractions.iter().find(|f| !(**f >= 0.0 && f.is_finite())) {
        return Err(SimError::Config(format!("erase fraction {f} is not a non-negative number")));
    }
    let started = Instant::now();
    let per_replicate = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| sweep_replicate(cfg, r, fractions))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows: Vec<ErasureRow> = per_replicate[0].clone();
    for rep in &per_replicate[1..] {
        for (acc, row) in rows.iter_mut().zip(rep) {
            acc.retrievals += row.retrievals;
            acc.recovered += row.recovered;
            acc.candidates += row.candidates;
            acc.baseline_candidates += row.baseline_candidates;
            acc.lookups += row.lookups;
            acc.wildcarded += row.wildcarded;
            acc.exhausted += row.exhausted;
            acc.exhausted_members += row.exhausted_members;
            acc.degenerate |= row.degenerate;
        }
    }
    Ok(ErasureReport { config: cfg.clone(), rows, runtime: started.elapsed() })
}

/// Routing census of replicate 0: per partition, its address, the share
/// of the address line it owns and how many traced retrieval checks landed
/// on it.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingRow {
    pub file: FileId,
    pub address: crate::HashAddress,
    pub cell: f64,
    pub lookups: u64,
}

pub fn routing_histogram(cfg: &ExperimentConfig) -> Result<Vec<RoutingRow>, SimError> {
    cfg.validate()?;
    let rep = build_replicate(cfg, 0)?;
    let lut = Bflut::new(cfg.encoding()?);
    let mut counts = vec![0u64; cfg.file_count];
    for m in &rep.members {
        let (_, trace) = lut.lookup_trace(&rep.store, &m.credential, RetrieveOptions::default())?;
        for t in trace {
            counts[t.file.0 as usize] += 1;
        }
    }
    let cells = rep.store.routing_cells();
    (0..cfg.file_count)
        .map(|i| {
            let file = FileId(i as u32);
            Ok(RoutingRow { file, address: rep.store.address_of(file)?, cell: cells[i], lookups: counts[i] })
        })
        .collect()
}
