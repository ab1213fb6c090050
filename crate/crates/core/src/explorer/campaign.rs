use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExplorerError, PropertyReport};
use crate::protocol::{BlendGate, ProcessId, Value};
use crate::sim::{run_to_completion, CrashSpec, RandomConfig, RandomScheduler, Sim, TraceRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrashMode {
    None,
    /// Run `i` uses placement `i mod (n * (max_crash_point + 1))`.
    Sweep,
    /// Each run draws uniformly from no crash and every placement.
    Random,
}

impl std::str::FromStr for CrashMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(CrashMode::None),
            "sweep" => Ok(CrashMode::Sweep),
            "random" => Ok(CrashMode::Random),
            _ => Err(format!("unknown crash mode '{s}' (expected none, sweep or random)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub n: usize,
    pub inputs: Vec<Value>,
    pub runs: u64,
    pub crash_mode: CrashMode,
    pub seed: u64,
    pub max_crash_point: u32,
    pub fairness_bound: u64,
    pub null_budget: u32,
    pub null_probability: f64,
    /// Fraction of runs that use per-link delivery skew.
    pub skew_fraction: f64,
    pub link_skew: f64,
    /// Traces are attached to at most this many violations.
    pub capture_traces: usize,
    pub blend_gate: BlendGate,
}

impl CampaignConfig {
    pub fn new(n: usize, inputs: Vec<Value>, runs: u64, crash_mode: CrashMode, seed: u64) -> Self {
        let d = RandomConfig::default();
        CampaignConfig {
            n,
            inputs,
            runs,
            crash_mode,
            seed,
            max_crash_point: 4,
            fairness_bound: d.fairness_bound,
            null_budget: d.null_budget,
            null_probability: d.null_probability,
            skew_fraction: 0.5,
            link_skew: 50.0,
            capture_traces: 4,
            blend_gate: BlendGate::default(),
        }
    }

    /// Every (process, crash point) pair the sweep mode cycles through.
    pub fn placements(&self) -> Vec<CrashSpec> {
        ProcessId::all(self.n).flat_map(|p| (0..=self.max_crash_point).map(move |k| CrashSpec::at(p, k))).collect()
    }

    /// Scheduler settings and crash placement for run `i`.
    pub fn run_setup(&self, i: u64) -> (RandomConfig, CrashSpec) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(i);
        let run_seed: u64 = rng.random();
        let placements = self.placements();
        let crash = match self.crash_mode {
            CrashMode::None => CrashSpec::none(),
            CrashMode::Sweep => placements[(i % placements.len() as u64) as usize],
            CrashMode::Random => {
                let k = rng.random_range(0..=placements.len());
                if k == placements.len() {
                    CrashSpec::none()
                } else {
                    placements[k]
                }
            }
        };
        let skewed = rng.random_bool(self.skew_fraction.clamp(0.0, 1.0));
        let cfg = RandomConfig {
            seed: run_seed,
            fairness_bound: self.fairness_bound,
            null_budget: self.null_budget,
            null_probability: self.null_probability,
            link_skew: skewed.then_some(self.link_skew),
        };
        (cfg, crash)
    }

    /// Replays run `i` with tracing enabled.
    pub fn trace_of(&self, i: u64) -> Option<Vec<TraceRecord>> {
        let (cfg, crash) = self.run_setup(i);
        let mut sim = Sim::with_gate(self.n, &self.inputs, crash, 0, self.blend_gate).ok()?;
        let mut sched = RandomScheduler::new(cfg, self.n);
        let _ = run_to_completion(&mut sim, &mut sched);
        Some(sim.trace().iter().map(TraceRecord::from).collect())
    }
}

const CHUNK: u64 = 256;

fn run_range(cfg: &CampaignConfig, lo: u64, hi: u64) -> PropertyReport {
    let mut report = PropertyReport::default();
    for i in lo..hi {
        let (rc, crash) = cfg.run_setup(i);
        let ctx = Some(format!("run={i} seed={} crash={crash} skew={}", rc.seed, rc.link_skew.is_some()));
        let mut sched = RandomScheduler::new(rc, cfg.n);
        let outcome = Sim::with_gate(cfg.n, &cfg.inputs, crash, 0, cfg.blend_gate)
            .map(Sim::without_trace)
            .and_then(|mut sim| run_to_completion(&mut sim, &mut sched));
        let before = report.total_violations();
        match outcome {
            Ok(r) => report.record_run(&r, &cfg.inputs, ctx),
            Err(e) => report.record_error(&e, ctx),
        }
        if report.total_violations() > before {
            let captured = report.violations.iter().filter(|v| v.trace.is_some()).count();
            if captured < cfg.capture_traces {
                if let Some(v) = report.violations.last_mut().filter(|v| v.trace.is_none()) {
                    v.trace = cfg.trace_of(i);
                }
            }
        }
    }
    report
}

/// Runs `cfg.runs` seeded random schedules and checks every one.
///
/// The result depends only on `cfg`, never on the thread count.
pub fn random_campaign(cfg: &CampaignConfig) -> Result<PropertyReport, ExplorerError> {
    if cfg.runs == 0 {
        return Err(ExplorerError::InvalidConfig("runs must be at least 1".into()));
    }
    if cfg.inputs.len() != cfg.n {
        return Err(ExplorerError::InvalidConfig(format!("{} inputs for n={}", cfg.inputs.len(), cfg.n)));
    }
    Sim::new(cfg.n, &cfg.inputs, CrashSpec::none(), 0)?;
    let chunks: Vec<u64> = (0..cfg.runs.div_ceil(CHUNK)).collect();
    let parts: Vec<PropertyReport> =
        chunks.par_iter().map(|&c| run_range(cfg, c * CHUNK, ((c + 1) * CHUNK).min(cfg.runs))).collect();
    let mut report = PropertyReport::default();
    for p in parts {
        report.merge(p);
    }
    Ok(report)
}
