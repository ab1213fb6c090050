//! Property checks over completed runs, plus the three ways of producing
//! runs: random campaigns, scripted scenarios and bounded exhaustive search.

mod campaign;
mod exhaustive;
mod scenarios;

pub use campaign::{random_campaign, CampaignConfig, CrashMode};
pub use exhaustive::{bounded_exhaustive, CrashPlacements, ExhaustiveConfig, ExhaustiveReport, DEFAULT_NODE_BUDGET};
pub use scenarios::{scenario_library, scripted_scenarios, ExpectedOutcome, ScenarioFilter, ScenarioScript};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{ProcessId, Value};
use crate::reduction::{reduce_run, TiePolicy};
use crate::sim::{RunResult, SimError, TraceRecord};

/// Violations kept in full per report; the rest are only counted.
pub const MAX_RECORDED_VIOLATIONS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExplorerError {
    #[error("{0}")]
    InvalidConfig(String),
    #[error("node budget {budget} exhausted after {nodes} nodes")]
    StateSpaceBudgetExceeded { budget: u64, nodes: u64, partial: Box<ExhaustiveReport> },
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    /// All decided vectors are identical.
    Agreement,
    /// Decided slots hold true inputs, with at most one empty slot.
    Validity,
    /// Every correct process decided.
    Termination,
    /// Processes that entered Decision with a one-empty vector share its empty slot.
    CommonEmptySlot,
    /// The number of processes entering Decision with a full vector is never exactly one.
    FullEntrantCount,
    /// The protocol reported an input it should never see (conflicting values or duplicates).
    ModelAssumption,
    /// The simulator observed a phase regression or a changed output.
    RuntimeInvariant,
    /// A scripted scenario did not produce its expected outcome.
    ScenarioOutcome,
    /// Binary values computed from the decisions were not unanimous.
    BinaryLift,
}

impl Property {
    pub fn name(self) -> &'static str {
        match self {
            Property::Agreement => "agreement",
            Property::Validity => "validity",
            Property::Termination => "termination",
            Property::CommonEmptySlot => "common_empty_slot",
            Property::FullEntrantCount => "full_entrant_count",
            Property::ModelAssumption => "model_assumption",
            Property::RuntimeInvariant => "runtime_invariant",
            Property::ScenarioOutcome => "scenario_outcome",
            Property::BinaryLift => "binary_lift",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub property: Property,
    pub run_digest: String,
    pub detail: String,
    /// How to reproduce: seed, crash placement or scenario name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    /// Replayable trace of the offending run, when captured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRecord>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub runs: u64,
    /// Per-property violation counts, including violations not kept in `violations`.
    pub violation_counts: BTreeMap<Property, u64>,
    pub violations: Vec<Violation>,
    pub coverage: BTreeMap<String, u64>,
    /// Runs whose decisions were reduced to bits under both tie values.
    pub binary_checked: u64,
}

impl PropertyReport {
    pub fn total_violations(&self) -> u64 {
        self.violation_counts.values().sum()
    }

    pub fn is_clean(&self) -> bool {
        self.total_violations() == 0
    }

    pub fn count(&self, p: Property) -> u64 {
        self.violation_counts.get(&p).copied().unwrap_or(0)
    }

    pub fn push_violation(&mut self, v: Violation) {
        *self.violation_counts.entry(v.property).or_default() += 1;
        if self.violations.len() < MAX_RECORDED_VIOLATIONS {
            self.violations.push(v);
        }
    }

    pub fn cover(&mut self, key: impl Into<String>) {
        *self.coverage.entry(key.into()).or_default() += 1;
    }

    /// Folds `other` into `self`. Merging is associative; violation order
    /// follows merge order.
    pub fn merge(&mut self, other: PropertyReport) {
        self.runs += other.runs;
        self.binary_checked += other.binary_checked;
        for (k, v) in other.violation_counts {
            *self.violation_counts.entry(k).or_default() += v;
        }
        for v in other.violations {
            if self.violations.len() < MAX_RECORDED_VIOLATIONS {
                self.violations.push(v);
            }
        }
        for (k, v) in other.coverage {
            *self.coverage.entry(k).or_default() += v;
        }
    }

    /// Records one completed run: checks it and updates coverage.
    pub fn record_run(&mut self, result: &RunResult, inputs: &[Value], context: Option<String>) {
        self.runs += 1;
        for mut v in check_properties(result, inputs) {
            v.context = context.clone();
            self.push_violation(v);
        }
        if let Some(v) = check_binary_lift(result) {
            self.binary_checked += 1;
            if let Some(mut v) = v {
                v.context = context.clone();
                self.push_violation(v);
            }
        }
        for key in coverage_keys(result) {
            self.cover(key);
        }
    }

    /// Records a run that failed inside the simulator.
    pub fn record_error(&mut self, err: &SimError, context: Option<String>) {
        self.runs += 1;
        let (property, digest) = match err {
            SimError::StalledRun { partial, .. } => (Property::Termination, partial.digest.clone()),
            SimError::Protocol(_) => (Property::ModelAssumption, String::new()),
            _ => (Property::RuntimeInvariant, String::new()),
        };
        if let SimError::StalledRun { partial, .. } = err {
            for key in coverage_keys(partial) {
                self.cover(key);
            }
        }
        self.push_violation(Violation { property, run_digest: digest, detail: err.to_string(), context, trace: None });
    }
}

fn coverage_keys(r: &RunResult) -> Vec<String> {
    let mut keys = Vec::with_capacity(3);
    let decided: Vec<_> = r.decisions.iter().flatten().collect();
    if let Some(d) = decided.first() {
        keys.push(if d.is_full() { "decision:full".into() } else { "decision:one_empty".into() });
    }
    let (full, empty) = r.completion_split();
    keys.push(format!("entry:{full}F+{empty}E"));
    keys.push(match r.crash.process {
        None => "crash:none".into(),
        Some(p) => format!("crash:{p}@{}", r.crash.crash_point),
    });
    keys
}

/// Checks agreement, validity, termination and the two completion-split
/// properties. Violations are returned as data.
pub fn check_properties(result: &RunResult, inputs: &[Value]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |property, detail: String| {
        out.push(Violation { property, run_digest: result.digest.clone(), detail, context: None, trace: None })
    };
    let n = result.n;

    let decided: Vec<(ProcessId, _)> = ProcessId::all(n).filter_map(|p| result.decision(p).map(|d| (p, d))).collect();
    if let Some((p0, d0)) = decided.first() {
        for (p, d) in &decided[1..] {
            if d != d0 {
                push(Property::Agreement, format!("{p0} decided {d0} but {p} decided {d}"));
                break;
            }
        }
    }

    for (p, d) in &decided {
        if d.len() != n {
            push(Property::Validity, format!("{p} decided a vector of length {}", d.len()));
            continue;
        }
        if d.empty_count() > 1 {
            push(Property::Validity, format!("{p} decided {d} with {} empty slots", d.empty_count()));
        }
        for q in ProcessId::all(n) {
            if let Some(v) = d.get(q) {
                if Some(v) != inputs.get(q.slot()) {
                    push(Property::Validity, format!("{p} decided {v} for {q}, whose input is not that"));
                }
            }
        }
    }

    for p in ProcessId::all(n) {
        if result.is_correct(p) && result.decision(p).is_none() {
            push(Property::Termination, format!("correct process {p} did not decide"));
        }
    }

    let mut empty_slots: Vec<(ProcessId, ProcessId)> = Vec::new();
    for p in ProcessId::all(n) {
        if let Some(c) = &result.completions[p.slot()] {
            if let Some(e) = c.vector.first_empty() {
                empty_slots.push((p, e));
            }
        }
    }
    if let Some(&(p0, e0)) = empty_slots.first() {
        if let Some(&(p, e)) = empty_slots.iter().find(|(_, e)| *e != e0) {
            push(Property::CommonEmptySlot, format!("{p0} entered Decision missing {e0} but {p} missing {e}"));
        }
    }

    let (full, _) = result.completion_split();
    if full == 1 {
        push(Property::FullEntrantCount, "exactly one process entered Decision with a full vector".into());
    }

    for a in &result.anomalies {
        push(Property::RuntimeInvariant, a.clone());
    }
    out
}

/// For binary inputs, reduces every decision under both tie values. Returns
/// `None` when the run is not binary, `Some(None)` when unanimous.
pub fn check_binary_lift(result: &RunResult) -> Option<Option<Violation>> {
    if result.inputs.iter().any(|v| v.as_bit().is_none()) {
        return None;
    }
    let decisions: BTreeMap<ProcessId, _> =
        ProcessId::all(result.n).filter_map(|p| result.decision(p).map(|d| (p, d.clone()))).collect();
    for tie in [false, true] {
        match reduce_run(&decisions, TiePolicy::new(tie)) {
            Ok(r) if r.unanimous => {}
            Ok(r) => {
                return Some(Some(Violation {
                    property: Property::BinaryLift,
                    run_digest: result.digest.clone(),
                    detail: format!("tie={} gives bits {:?}", tie as u8, r.bits),
                    context: None,
                    trace: None,
                }))
            }
            Err(e) => {
                return Some(Some(Violation {
                    property: Property::BinaryLift,
                    run_digest: result.digest.clone(),
                    detail: e.to_string(),
                    context: None,
                    trace: None,
                }))
            }
        }
    }
    Some(None)
}
