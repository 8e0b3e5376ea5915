//! `bflut` command-line front end.
//!
//! Exit codes: 0 success, 1 key not found, 2 usage or domain error,
//! 3 store error.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use bflut::analysis::{self, AnalysisParams, FILE_UNIT_BITS};
use bflut::encoding::derive_prefix_address;
use bflut::kv::KvDoc;
use bflut::sim::{self, report, ExperimentConfig};
use bflut::store::FaultPlan;
use bflut::{ActorId, Bflut, BflutError, Credential, EncodingParams, FileId, KeyString, PartitionStore, Radix, RetrieveOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};

const CONF_FILE: &str = "store.conf";
const LOCK_FILE: &str = ".lock";

#[derive(Parser)]
#[command(name = "bflut", version, about = "Private key storage over a partitioned bit store")]
struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = "BFLUT_STORE", default_value = "bflut-store")]
    store: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a store with randomly addressed partitions.
    Init(InitArgs),
    /// Insert a key for a credential.
    Insert(InsertArgs),
    /// Retrieve every candidate key for a credential.
    Get(GetArgs),
    /// Evaluate a closed-form estimate.
    Analyze(AnalyzeArgs),
    /// Run a seeded experiment and write CSV reports.
    Simulate(SimulateArgs),
    /// Erase partitions, mark them unavailable, or bring them back.
    Faults(FaultsArgs),
}

#[derive(Args)]
struct InitArgs {
    #[arg(long, default_value_t = 100)]
    files: usize,
    #[arg(long, default_value_t = 1 << 24)]
    bits_per_file: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Key alphabet: 2 or 16.
    #[arg(long, default_value_t = 16)]
    radix: u32,
    #[arg(long, default_value_t = 64)]
    key_len: usize,
    /// Hash characters per bit position; must divide 64.
    #[arg(long, default_value_t = 4)]
    segment_width: usize,
    /// Replace an existing store at the path.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct CredentialArgs {
    #[arg(long)]
    user: String,
    /// Password on the command line (visible in shell history).
    #[arg(long, conflicts_with = "pass_stdin", required_unless_present = "pass_stdin")]
    pass: Option<String>,
    /// Read the password from the first line of standard input.
    #[arg(long)]
    pass_stdin: bool,
}

#[derive(Args)]
struct InsertArgs {
    #[command(flatten)]
    cred: CredentialArgs,
    #[arg(long, conflicts_with = "random", required_unless_present = "random")]
    key: Option<String>,
    /// Generate a uniformly random key and print it.
    #[arg(long)]
    random: bool,
    /// Must match the store's key length when given.
    #[arg(long)]
    key_len: Option<usize>,
    /// Must match the store's radix when given.
    #[arg(long)]
    radix: Option<u32>,
}

#[derive(Args)]
struct GetArgs {
    #[command(flatten)]
    cred: CredentialArgs,
    /// Must match the store's key length when given.
    #[arg(long)]
    key_len: Option<usize>,
    /// Treat erased or unavailable partitions as matching.
    #[arg(long)]
    wildcard: bool,
    /// Bit checks before the search gives up.
    #[arg(long, default_value_t = 1 << 20)]
    max_lookups: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Formula {
    /// False-positive probability.
    Fp,
    /// Segment width for a target activated-bit ratio.
    SolveU,
    /// Minimum storage for a target false-positive probability.
    MinF,
    /// Expected distinct files for a number of uniform accesses.
    Efiles,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, value_enum)]
    formula: Formula,
    /// Stored keys N.
    #[arg(long, default_value_t = 500_000)]
    n: u64,
    /// Key length L.
    #[arg(long, default_value_t = 64)]
    l: u32,
    /// Segment width U.
    #[arg(long, default_value_t = 4)]
    u: u32,
    /// Total bits F.
    #[arg(long, default_value_t = FILE_UNIT_BITS * 150.0)]
    f_bits: f64,
    /// Target activated-bit ratio.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Target false-positive probabilities (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "1e-6,1e-9,1e-12")]
    pfp: Vec<f64>,
    /// Files K.
    #[arg(long, default_value_t = 16)]
    k: u64,
    /// Accesses.
    #[arg(long, default_value_t = 512)]
    ops: u64,
    /// For `fp`: evaluate N = 100000..1000000 instead of a single N.
    #[arg(long)]
    table: bool,
    /// Also write the rows as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config (flat `key = value` text).
    #[arg(long)]
    config: PathBuf,
    /// Directory for CSV reports.
    #[arg(long, default_value = "sim-out")]
    out: PathBuf,
}

#[derive(Args)]
struct FaultsArgs {
    /// Partition ids to erase permanently.
    #[arg(long, value_delimiter = ',')]
    erase: Vec<u32>,
    /// Partition ids to mark unavailable.
    #[arg(long, value_delimiter = ',')]
    unavailable: Vec<u32>,
    /// Bring unavailable partitions back.
    #[arg(long)]
    clear: bool,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: e.into() }
}

fn store_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 3, error: e.into() }
}

fn not_found(msg: &str) -> Failure {
    Failure { code: 1, error: anyhow!("{msg}") }
}

fn search_err(e: BflutError) -> Failure {
    match e {
        BflutError::Encoding(_) | BflutError::DegenerateWildcard | BflutError::SearchBudgetExceeded { .. } => usage(e),
        _ => store_err(e),
    }
}

type Outcome = Result<(), Failure>;

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Outcome {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(store_err(e)),
        _ => Ok(()),
    }
}

/// Exclusive hold on a store directory for the life of the value.
struct StoreLock(PathBuf);

impl StoreLock {
    fn acquire(dir: &Path) -> Result<Self, Failure> {
        let path = dir.join(LOCK_FILE);
        fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| store_err(anyhow!("cannot lock {}: {e} (another bflut process may hold it)", path.display())))?;
        Ok(Self(path))
    }
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn load_params(dir: &Path) -> Result<EncodingParams, Failure> {
    let text = fs::read_to_string(dir.join(CONF_FILE))
        .with_context(|| format!("no store at {}", dir.display()))
        .map_err(store_err)?;
    let doc = KvDoc::parse(&text).map_err(store_err)?;
    let get = |k: &str| -> Result<usize, Failure> {
        doc.get::<usize>(k).map_err(store_err)?.ok_or_else(|| store_err(anyhow!("{CONF_FILE}: missing `{k}`")))
    };
    let radix = Radix::from_base(get("radix")? as u32).map_err(store_err)?;
    EncodingParams::new(radix, get("key_len")?, get("segment_width")?).map_err(store_err)
}

fn open_store(dir: &Path) -> Result<(PartitionStore, EncodingParams), Failure> {
    let params = load_params(dir)?;
    let store = PartitionStore::open(dir).map_err(store_err)?;
    Ok((store, params))
}

fn read_credential(args: &CredentialArgs) -> Result<Credential, Failure> {
    let pass = match &args.pass {
        Some(p) => p.clone(),
        None => {
            let mut line = String::new();
            io::stdin().lock().read_line(&mut line).map_err(usage)?;
            line.trim_end_matches(['\r', '\n']).to_string()
        }
    };
    Credential::new(args.user.as_str(), pass).map_err(usage)
}

fn check_override(what: &str, given: Option<usize>, actual: usize) -> Outcome {
    match given {
        Some(g) if g != actual => Err(usage(anyhow!("--{what} {g} does not match the store's {what} {actual}"))),
        _ => Ok(()),
    }
}

fn cmd_init(dir: &Path, a: &InitArgs) -> Outcome {
    let radix = Radix::from_base(a.radix).map_err(usage)?;
    EncodingParams::new(radix, a.key_len, a.segment_width).map_err(usage)?;
    if a.files == 0 {
        return Err(usage(anyhow!("--files must be at least 1")));
    }
    if dir.exists() {
        if !a.force {
            return Err(usage(anyhow!("{} already exists; pass --force to replace it", dir.display())));
        }
        let is_store = dir.join(CONF_FILE).exists() || dir.join("registry.txt").exists();
        let is_empty = fs::read_dir(dir).map_err(store_err)?.next().is_none();
        if !is_store && !is_empty {
            return Err(usage(anyhow!("{} is not a bflut store; refusing to replace it", dir.display())));
        }
        let _lock = StoreLock::acquire(dir)?;
        for entry in fs::read_dir(dir).map_err(store_err)? {
            let path = entry.map_err(store_err)?.path();
            if path.file_name().is_some_and(|n| n != LOCK_FILE) {
                fs::remove_file(&path).map_err(store_err)?;
            }
        }
    }
    fs::create_dir_all(dir).map_err(store_err)?;
    let _lock = StoreLock::acquire(dir)?;
    let store = PartitionStore::init(a.files, a.bits_per_file, a.seed).map_err(usage)?;
    store.save(dir).map_err(store_err)?;
    let conf = format!("radix = {}\nkey_len = {}\nsegment_width = {}\n", a.radix, a.key_len, a.segment_width);
    fs::write(dir.join(CONF_FILE), conf).map_err(store_err)?;
    let mut text = format!(
        "initialized {} partition(s) of {} bits at {} (radix {}, key length {}, segment width {})\n",
        a.files,
        a.bits_per_file,
        dir.display(),
        a.radix,
        a.key_len,
        a.segment_width
    );
    for (addr, name) in store.registry().iter() {
        text.push_str(&format!("{name} {addr}\n"));
    }
    emit(&text)
}

fn cmd_insert(dir: &Path, a: &InsertArgs) -> Outcome {
    let params = load_params(dir)?;
    check_override("key-len", a.key_len, params.key_len)?;
    check_override("radix", a.radix.map(|r| r as usize), params.radix.base() as usize)?;
    let cred = read_credential(&a.cred)?;
    let key = match &a.key {
        Some(k) => {
            derive_prefix_address(&cred, k, params.radix).map_err(usage)?;
            KeyString::new(k.as_str(), params.radix, params.key_len).map_err(usage)?
        }
        None => KeyString::random(&mut rand::thread_rng(), params.radix, params.key_len),
    };
    let _lock = StoreLock::acquire(dir)?;
    let (store, _) = open_store(dir)?;
    let receipt = Bflut::new(params).insert(&store, &cred, &key, &ActorId::new(cred.username())).map_err(search_err)?;
    store.save(dir).map_err(store_err)?;
    if a.random {
        println!("key: {key}");
    }
    println!(
        "{} new bits ({} positions written across {} partition(s))",
        receipt.newly_set, receipt.positions_written, receipt.files_touched
    );
    Ok(())
}

fn cmd_get(dir: &Path, a: &GetArgs) -> Outcome {
    let (store, params) = open_store(dir)?;
    check_override("key-len", a.key_len, params.key_len)?;
    let cred = read_credential(&a.cred)?;
    let opts = RetrieveOptions { wildcard_on_missing: a.wildcard, max_lookups: a.max_lookups };
    let result = Bflut::new(params).retrieve(&store, &cred, opts).map_err(search_err)?;
    let text: String = result.candidates.iter().map(|c| format!("{c}\n")).collect();
    emit(&text)?;
    eprintln!(
        "files_touched: {}, lookups: {}, wildcarded: {}",
        result.files_touched, result.lookups, result.wildcarded
    );
    if result.candidates.is_empty() {
        return Err(not_found("the key does not exist in the system"));
    }
    Ok(())
}

fn write_csv(path: &Option<PathBuf>, f: impl FnOnce(fs::File) -> Result<(), sim::SimError>) -> Outcome {
    if let Some(p) = path {
        let file = fs::File::create(p).map_err(store_err)?;
        f(file).map_err(store_err)?;
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_analyze(a: &AnalyzeArgs) -> Outcome {
    match a.formula {
        Formula::Fp => {
            let base = AnalysisParams::new(a.n, a.f_bits, a.l, a.u);
            let keys = if a.table { analysis::reference_keys() } else { vec![a.n] };
            let rows = analysis::fp_table(&base, &keys).map_err(usage)?;
            for r in &rows {
                if a.table {
                    println!("{} {} (log10 {:.4})", r.keys, r.fp.scientific(2), r.fp.log10);
                } else {
                    println!("{}", r.fp.scientific(2));
                }
            }
            write_csv(&a.csv, |f| report::write_fp_table(f, &rows))
        }
        Formula::SolveU => {
            let s = analysis::solve_segment_width(a.n, a.f_bits, a.l, a.alpha).map_err(usage)?;
            let (d, achieved) = analysis::nearest_divisor(a.n, a.f_bits, a.l, s.segment_width);
            println!("U = {:.4}", s.segment_width);
            println!("nearest divisor of L: {d} (alpha = {achieved:.4})");
            if s.underloaded {
                println!("warning: U < 1, the system is underloaded for alpha = {}", a.alpha);
            }
            Ok(())
        }
        Formula::MinF => {
            let rows = a
                .pfp
                .iter()
                .map(|&p| analysis::min_storage(a.n, a.l, a.u, p).map(|m| (p, m)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(usage)?;
            for (p, m) in &rows {
                println!("p_fp {p:e}: F_min = {:.0} bits = {:.2} * 2^21", m.bits, m.file_units);
            }
            write_csv(&a.csv, |f| report::write_min_storage(f, &rows))
        }
        Formula::Efiles => {
            let e = analysis::expected_unique_files(a.k, a.ops).map_err(usage)?;
            println!("{e:.6}");
            Ok(())
        }
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Outcome {
    let cfg = ExperimentConfig::load(&a.config).map_err(|e| match e {
        sim::SimError::Io(_) => store_err(e),
        _ => usage(e),
    })?;
    let sim_fail = |e: sim::SimError| match e {
        sim::SimError::Search(BflutError::SearchBudgetExceeded { .. }) => usage(anyhow!(
            "{e}; wildcard branching over the configured faults is too wide for this radix and key length"
        )),
        sim::SimError::Config(_) | sim::SimError::Kv(_) | sim::SimError::Encoding(_) | sim::SimError::Search(_) => usage(e),
        _ => store_err(e),
    };
    fs::create_dir_all(&a.out).map_err(store_err)?;
    let create = |name: &str| fs::File::create(a.out.join(name)).map_err(store_err);

    let pop = sim::run_population(&cfg).map_err(sim_fail)?;
    report::write_access(create("access.csv")?, &pop).map_err(sim_fail)?;
    report::write_summary(create("summary.csv")?, &pop).map_err(sim_fail)?;
    let routing = sim::routing_histogram(&cfg).map_err(sim_fail)?;
    report::write_routing(create("routing.csv")?, &routing).map_err(sim_fail)?;
    println!(
        "{} retrievals, mean unique files {:.2}, alpha {:.6}, fp {}/{} (closed form {})",
        pop.users.len(),
        pop.mean_unique_files(),
        pop.alpha(),
        pop.fp.false_positives,
        pop.fp.probes,
        pop.closed_form.scientific(2)
    );
    if !cfg.erase_fractions.is_empty() {
        let sweep = sim::run_erasure_sweep(&cfg, &cfg.erase_fractions).map_err(sim_fail)?;
        report::write_erasure(create("erasure.csv")?, &sweep).map_err(sim_fail)?;
        for r in &sweep.rows {
            let recall = r.recall().map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
            let inflation = r.inflation().map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
            let note = if r.degenerate { " (every partition erased)" } else { "" };
            println!("erase {}: recall {recall}, inflation {inflation}{note}", r.fraction);
        }
    }
    eprintln!("wrote reports to {} in {:.2?}", a.out.display(), pop.runtime);
    Ok(())
}

fn cmd_faults(dir: &Path, a: &FaultsArgs) -> Outcome {
    let _lock = StoreLock::acquire(dir)?;
    let (store, _) = open_store(dir)?;
    if a.clear {
        store.clear_faults();
    }
    let plan = FaultPlan {
        erased: a.erase.iter().map(|&i| FileId(i)).collect(),
        unavailable: a.unavailable.iter().map(|&i| FileId(i)).collect(),
    };
    store.apply_faults(&plan).map_err(usage)?;
    store.save(dir).map_err(store_err)?;
    let now = store.fault_plan();
    let list = |s: &std::collections::BTreeSet<FileId>| s.iter().map(|f| f.0.to_string()).collect::<Vec<_>>().join(",");
    println!("erased: [{}] unavailable: [{}]", list(&now.erased), list(&now.unavailable));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Init(a) => cmd_init(&cli.store, a),
        Command::Insert(a) => cmd_insert(&cli.store, a),
        Command::Get(a) => cmd_get(&cli.store, a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Faults(a) => cmd_faults(&cli.store, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
