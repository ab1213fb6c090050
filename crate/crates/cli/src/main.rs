//! `vecagree`: random campaigns, scripted scenarios, bounded exhaustive search,
//! the synchronous link-fault sweep and binary reduction from the command line.

mod manifest;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use manifest::{resolve_out, sidecar, RunManifest};
use vecagree_core::explorer::{
    bounded_exhaustive, check_properties, random_campaign, scripted_scenarios, CampaignConfig, CrashMode,
    CrashPlacements, ExhaustiveConfig, ExplorerError, ScenarioFilter, DEFAULT_NODE_BUDGET,
};
use vecagree_core::reduction::{reduce_run, TiePolicy};
use vecagree_core::sim::{read_trace_jsonl, replay_with_gate, CrashSpec, SimError, TraceRecord};
use vecagree_core::sync::{
    self, drop_profile, find_input_assignment, parse_input_bits, sweep, table_csv, Algorithm, SweepConfig, SyncError,
};
use vecagree_core::{BlendGate, ProcessId, Value, ValueVector};

const EXIT_VIOLATIONS: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<SyncError> for Failure {
    fn from(e: SyncError) -> Self {
        match e {
            SyncError::Io(_) | SyncError::CheckpointCorrupt(_) => Failure::Io(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<ExplorerError> for Failure {
    fn from(e: ExplorerError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<bool, Failure>;

#[derive(Parser)]
#[command(name = "vecagree", version, about = "Crash-tolerant vector consensus: simulation, exploration and sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Output file; relative paths resolve under $VECAGREE_OUT_DIR when set.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the run manifest to stderr.
    #[arg(long)]
    manifest: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Seeded random schedules with property checks.
    Explore {
        #[arg(long, default_value_t = 5)]
        n: usize,
        /// Input bits such as 11001, or comma-separated values.
        #[arg(long)]
        inputs: String,
        #[arg(long, default_value_t = 1000)]
        runs: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "random")]
        crash: CrashMode,
        #[arg(long, default_value_t = 4)]
        max_crash_point: u32,
        #[arg(long, default_value = "originator-quorum")]
        blend_gate: BlendGate,
        #[command(flatten)]
        common: Common,
    },
    /// The scripted proof-case schedules for N = 5.
    Scenarios {
        /// all, crash, no-crash, or a script name a..h.
        #[arg(long, default_value = "all")]
        filter: ScenarioFilter,
        /// Random tail seeds 1..=k run after each script, besides a FIFO tail.
        #[arg(long, default_value_t = 4)]
        tail_seeds: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Every schedule within a reorder window, for every crash placement.
    Exhaustive {
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value = "11001")]
        inputs: String,
        #[arg(long, default_value_t = 2)]
        window: usize,
        /// all or none
        #[arg(long, default_value = "all")]
        crash: String,
        #[arg(long, default_value_t = 4)]
        max_crash_point: u32,
        #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
        budget: u64,
        #[arg(long, default_value = "originator-quorum")]
        blend_gate: BlendGate,
        #[command(flatten)]
        common: Common,
    },
    /// Synchronous sweep over all pairs of fault sets; writes a Table 1 CSV.
    Sweep {
        #[arg(long, default_value = "11001")]
        inputs: String,
        #[arg(long, default_value = "via-vector")]
        algorithm: Algorithm,
        #[arg(long, default_value_t = 0, value_parser = parse_tie)]
        tie: u8,
        /// Worker threads; 0 uses the available parallelism.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, requires = "checkpoint")]
        resume: bool,
        /// Run only the partition of this f1 index.
        #[arg(long)]
        smoke_f1: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Per-slot drop counts and the predicted split of every input assignment.
    Profile {
        #[arg(long, default_value_t = 5)]
        n: usize,
        /// Target (agreed, tie) split, e.g. 134,209.
        #[arg(long, default_value = "134,209")]
        target: String,
        /// Use the any-process drop counts instead of the common-vector ones.
        #[arg(long)]
        any_process: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Reduce decided vectors to bits with a tie value.
    Reduce {
        #[arg(long)]
        decisions: PathBuf,
        #[arg(long, default_value_t = 0, value_parser = parse_tie)]
        tie: u8,
        #[command(flatten)]
        common: Common,
    },
    /// Re-execute an exported trace; it must drain the buffer and pass the checks.
    Replay {
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long)]
        inputs: String,
        /// none or P<i>@<point>
        #[arg(long, default_value = "none")]
        crash: CrashSpec,
        #[arg(long, default_value = "originator-quorum")]
        blend_gate: BlendGate,
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_tie(s: &str) -> Result<u8, String> {
    match s {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(format!("tie value must be 0 or 1, got '{s}'")),
    }
}

fn parse_inputs(s: &str, n: usize) -> Result<Vec<Value>, Failure> {
    let values = if s.contains(',') {
        s.split(',').map(Value::new).collect::<Result<Vec<_>, _>>()
    } else {
        Value::parse_bits(s)
    }
    .map_err(|e| Failure::Usage(format!("--inputs: {e}")))?;
    if values.len() != n {
        return Err(Failure::Usage(format!("--inputs has {} values, --n is {n}", values.len())));
    }
    Ok(values)
}

fn parse_bits_arg(s: &str) -> Result<Vec<bool>, Failure> {
    parse_input_bits(s).map_err(|e| Failure::Usage(format!("--inputs: {e}")))
}

/// Writes `bytes` to the resolved `--out` path, or to stdout without one,
/// then writes or prints the manifest.
fn emit(common: &Common, bytes: &[u8], mut manifest: RunManifest, result: &impl Serialize) -> Result<(), Failure> {
    manifest.finish(result);
    match &common.out {
        Some(out) => {
            let path = resolve_out(out);
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&path, bytes)?;
            manifest.record_output(&path, bytes);
            let m = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
            std::fs::write(sidecar(&path), m)?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            std::io::stdout().write_all(bytes)?;
        }
    }
    if common.manifest {
        eprintln!("{}", serde_json::to_string_pretty(&manifest).expect("manifest serializes"));
    }
    Ok(())
}

fn pretty(v: &impl Serialize) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("results serialize");
    b.push(b'\n');
    b
}

/// Writes each captured counterexample trace next to the report.
fn archive_traces(common: &Common, report: &vecagree_core::explorer::PropertyReport) -> Result<(), Failure> {
    let Some(out) = &common.out else { return Ok(()) };
    let path = resolve_out(out);
    for (k, v) in report.violations.iter().enumerate() {
        let Some(trace) = &v.trace else { continue };
        let mut file = path.as_os_str().to_owned();
        file.push(format!(".violation-{k}.jsonl"));
        let mut w = std::io::BufWriter::new(std::fs::File::create(PathBuf::from(file))?);
        for rec in trace {
            serde_json::to_writer(&mut w, rec).map_err(std::io::Error::other)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn explore(
    n: usize,
    inputs: &str,
    runs: u64,
    seed: u64,
    crash: CrashMode,
    max_crash_point: u32,
    blend_gate: BlendGate,
    common: &Common,
) -> CmdResult {
    let values = parse_inputs(inputs, n)?;
    let mut cfg = CampaignConfig::new(n, values, runs, crash, seed);
    cfg.max_crash_point = max_crash_point;
    cfg.blend_gate = blend_gate;
    let manifest = RunManifest::start("explore", serde_json::to_value(&cfg).expect("config serializes"), vec![seed]);
    let report = random_campaign(&cfg)?;
    emit(common, &pretty(&report), manifest, &report)?;
    archive_traces(common, &report)?;
    eprintln!("{} runs, {} violations", report.runs, report.total_violations());
    Ok(report.is_clean())
}

fn scenarios(filter: &ScenarioFilter, tail_seeds: u64, common: &Common) -> CmdResult {
    let seeds: Vec<u64> = (1..=tail_seeds).collect();
    let manifest = RunManifest::start("scenarios", json!({ "filter": filter, "tail_seeds": seeds }), seeds.clone());
    let report = scripted_scenarios(filter, &seeds)?;
    emit(common, &pretty(&report), manifest, &report)?;
    eprintln!("{} runs, {} violations", report.runs, report.total_violations());
    Ok(report.is_clean())
}

#[allow(clippy::too_many_arguments)]
fn exhaustive(
    n: usize,
    inputs: &str,
    window: usize,
    crash: &str,
    max_crash_point: u32,
    budget: u64,
    blend_gate: BlendGate,
    common: &Common,
) -> CmdResult {
    let values = parse_inputs(inputs, n)?;
    let placements = match crash {
        "all" => CrashPlacements::All { max_point: max_crash_point },
        "none" => CrashPlacements::None,
        _ => return Err(Failure::Usage(format!("--crash must be all or none, got '{crash}'"))),
    };
    let mut cfg = ExhaustiveConfig::new(n, values, window, placements);
    cfg.node_budget = budget;
    cfg.blend_gate = blend_gate;
    let manifest = RunManifest::start("exhaustive", serde_json::to_value(&cfg).expect("config serializes"), vec![]);
    let (report, complete) = match bounded_exhaustive(&cfg) {
        Ok(r) => (r, true),
        Err(ExplorerError::StateSpaceBudgetExceeded { partial, budget, .. }) => {
            eprintln!("node budget {budget} exceeded; the report is partial");
            (*partial, false)
        }
        Err(e) => return Err(e.into()),
    };
    emit(common, &pretty(&report), manifest, &report)?;
    eprintln!(
        "{} configurations, {} terminal, {} violations",
        report.nodes,
        report.terminals,
        report.report.total_violations()
    );
    Ok(complete && report.report.is_clean())
}

#[allow(clippy::too_many_arguments)]
fn sweep_cmd(
    inputs: &str,
    algorithm: Algorithm,
    tie: u8,
    workers: usize,
    checkpoint: Option<PathBuf>,
    resume: bool,
    smoke_f1: Option<usize>,
    common: &Common,
) -> CmdResult {
    let bits = parse_bits_arg(inputs)?;
    let mut cfg = SweepConfig::new(bits, algorithm);
    cfg.tie = TiePolicy::new(tie == 1);
    cfg.workers = workers;
    cfg.checkpoint = checkpoint.map(|p| resolve_out(&p));
    cfg.resume = resume;
    cfg.only_f1 = smoke_f1;
    let params = json!({
        "inputs": inputs,
        "algorithm": algorithm,
        "tie": tie,
        "faulty_links": cfg.faulty_links,
        "smoke_f1": smoke_f1,
    });
    let manifest = RunManifest::start("sweep", params, vec![]);
    let n = cfg.inputs.len();
    let sets = sync::enumerate_fault_sets(sync::all_links(n).len(), cfg.faulty_links)?.len() as u64;
    let tally = sweep(&cfg)?;
    let csv = table_csv(n, cfg.faulty_links, sets, &tally);
    emit(common, csv.as_bytes(), manifest, &tally)?;
    eprintln!("{}", serde_json::to_string(&tally).expect("tally serializes"));
    Ok(true)
}

fn profile_cmd(n: usize, target: &str, any_process: bool, common: &Common) -> CmdResult {
    let bad = || Failure::Usage(format!("--target must be two counts like 134,209, got '{target}'"));
    let (a, t) = target.split_once(',').ok_or_else(bad)?;
    let target = (a.trim().parse().map_err(|_| bad())?, t.trim().parse().map_err(|_| bad())?);
    let manifest =
        RunManifest::start("profile", json!({ "n": n, "target": target, "any_process": any_process }), vec![]);
    let profile = drop_profile(n, n - 1)?;
    let d = if any_process { &profile.any_process } else { &profile.common };
    let (matched, nearest) = match find_input_assignment(d, target) {
        Ok(hits) => (hits, Vec::new()),
        Err(SyncError::NoMatch { nearest }) => (Vec::new(), nearest),
        Err(e) => return Err(e.into()),
    };
    let result = json!({
        "profile": profile,
        "used": if any_process { "any_process" } else { "common" },
        "target": target,
        "splits": sync::assignment_splits(d),
        "matches": matched,
        "nearest": nearest,
    });
    emit(common, &pretty(&result), manifest, &result)?;
    if matched.is_empty() {
        eprintln!("no assignment reproduces {target:?}; {} nearest listed", nearest.len());
    }
    Ok(true)
}

#[derive(Deserialize)]
struct Decisions {
    decisions: Vec<Option<ValueVector>>,
}

/// Accepted shapes of a decisions file.
#[derive(Deserialize)]
#[serde(untagged)]
enum DecisionsFile {
    /// A run result, or anything with a per-slot `decisions` array.
    Run { decisions: Vec<Option<ValueVector>> },
    /// The output of `replay`.
    Replayed { result: Decisions },
    /// Process number to decided vector.
    Map(BTreeMap<String, ValueVector>),
}

fn load_decisions(path: &Path) -> Result<BTreeMap<ProcessId, ValueVector>, Failure> {
    let text = std::fs::read_to_string(path)?;
    let parsed: DecisionsFile =
        serde_json::from_str(&text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    match parsed {
        DecisionsFile::Run { decisions } | DecisionsFile::Replayed { result: Decisions { decisions } } => {
            for (slot, v) in decisions.into_iter().enumerate() {
                if let Some(v) = v {
                    out.insert(ProcessId::from_slot(slot), v);
                }
            }
        }
        DecisionsFile::Map(map) => {
            for (k, v) in map {
                let i: usize = k
                    .trim_start_matches(['P', 'p'])
                    .parse()
                    .map_err(|_| Failure::Io(format!("{}: bad process key '{k}'", path.display())))?;
                let p = ProcessId::new(i, v.len()).map_err(|e| Failure::Io(e.to_string()))?;
                out.insert(p, v);
            }
        }
    }
    Ok(out)
}

fn reduce_cmd(decisions: &Path, tie: u8, common: &Common) -> CmdResult {
    let manifest = RunManifest::start("reduce", json!({ "decisions": decisions, "tie": tie }), vec![]);
    let map = load_decisions(&resolve_out(decisions))?;
    let report = reduce_run(&map, TiePolicy::new(tie == 1)).map_err(|e| Failure::Io(e.to_string()))?;
    emit(common, &pretty(&report), manifest, &report)?;
    Ok(report.unanimous)
}

fn replay_cmd(n: usize, inputs: &str, crash: CrashSpec, gate: BlendGate, trace: &Path, common: &Common) -> CmdResult {
    let values = parse_inputs(inputs, n)?;
    let records: Vec<TraceRecord> = read_trace_jsonl(std::io::BufReader::new(std::fs::File::open(trace)?))?;
    let manifest = RunManifest::start(
        "replay",
        json!({ "n": n, "inputs": inputs, "crash": crash.to_string(), "blend_gate": gate, "trace": trace }),
        vec![],
    );
    let result = replay_with_gate(n, &values, crash, 0, gate, &records)?;
    let violations = check_properties(&result, &values);
    let drained = result.undelivered == 0;
    let out = json!({ "result": result, "drained": drained, "violations": violations });
    emit(common, &pretty(&out), manifest, &out)?;
    if !drained {
        eprintln!("trace ends with {} undelivered messages", result.undelivered);
    }
    Ok(drained && violations.is_empty())
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Explore { n, inputs, runs, seed, crash, max_crash_point, blend_gate, common } => {
            explore(n, &inputs, runs, seed, crash, max_crash_point, blend_gate, &common)
        }
        Command::Scenarios { filter, tail_seeds, common } => scenarios(&filter, tail_seeds, &common),
        Command::Exhaustive { n, inputs, window, crash, max_crash_point, budget, blend_gate, common } => {
            exhaustive(n, &inputs, window, &crash, max_crash_point, budget, blend_gate, &common)
        }
        Command::Sweep { inputs, algorithm, tie, workers, checkpoint, resume, smoke_f1, common } => {
            sweep_cmd(&inputs, algorithm, tie, workers, checkpoint, resume, smoke_f1, &common)
        }
        Command::Profile { n, target, any_process, common } => profile_cmd(n, &target, any_process, &common),
        Command::Reduce { decisions, tie, common } => reduce_cmd(&decisions, tie, &common),
        Command::Replay { n, inputs, crash, blend_gate, trace, common } => {
            replay_cmd(n, &inputs, crash, blend_gate, &trace, &common)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VIOLATIONS),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_IO)
        }
    }
}
