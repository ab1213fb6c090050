use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExplorerError, PropertyReport};
use crate::protocol::{BlendGate, ProcessId, Value};
use crate::sim::{Choice, CrashSpec, Sim};

pub const DEFAULT_NODE_BUDGET: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrashPlacements {
    None,
    /// No crash, plus every process crashing at every point `0..=max_point`.
    All {
        max_point: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveConfig {
    pub n: usize,
    pub inputs: Vec<Value>,
    /// The scheduler may pick any of this many oldest deliverable
    /// envelopes, age being [`crate::sim::Pending::logical_key`].
    pub window: usize,
    pub crash_placements: CrashPlacements,
    /// Visited configurations allowed per crash placement.
    pub node_budget: u64,
    pub blend_gate: BlendGate,
    /// Treat a configuration where every correct process has decided as terminal.
    pub stop_when_decided: bool,
}

impl ExhaustiveConfig {
    pub fn new(n: usize, inputs: Vec<Value>, window: usize, crash_placements: CrashPlacements) -> Self {
        ExhaustiveConfig {
            n,
            inputs,
            window,
            crash_placements,
            node_budget: DEFAULT_NODE_BUDGET,
            blend_gate: BlendGate::default(),
            stop_when_decided: true,
        }
    }

    pub fn placements(&self) -> Vec<CrashSpec> {
        let mut out = vec![CrashSpec::none()];
        if let CrashPlacements::All { max_point } = self.crash_placements {
            for p in ProcessId::all(self.n) {
                out.extend((0..=max_point).map(|k| CrashSpec::at(p, k)));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementStats {
    pub crash: CrashSpec,
    /// Distinct configurations visited.
    pub nodes: u64,
    /// Distinct terminal configurations checked.
    pub terminals: u64,
    pub complete: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveReport {
    pub window: usize,
    pub node_budget: u64,
    pub nodes: u64,
    pub terminals: u64,
    pub placements: Vec<PlacementStats>,
    pub report: PropertyReport,
}

impl ExhaustiveReport {
    pub fn complete(&self) -> bool {
        self.placements.iter().all(|p| p.complete)
    }

    /// Configurations visited by the largest single placement.
    pub fn max_placement_nodes(&self) -> u64 {
        self.placements.iter().map(|p| p.nodes).max().unwrap_or(0)
    }
}

fn explore_one(cfg: &ExhaustiveConfig, crash: CrashSpec) -> Result<(PlacementStats, PropertyReport), ExplorerError> {
    let root = Sim::with_gate(cfg.n, &cfg.inputs, crash, 0, cfg.blend_gate)?.without_trace();
    let mut report = PropertyReport::default();
    let mut seen: HashSet<u64> = HashSet::new();
    seen.insert(root.config_hash());
    let mut stack = vec![root];
    let mut terminals = 0;
    let ctx = Some(format!("crash={crash} window={}", cfg.window));
    let mut complete = true;
    while let Some(sim) = stack.pop() {
        let window = sim.window(cfg.window);
        if window.is_empty() || (cfg.stop_when_decided && sim.undecided().is_empty()) {
            terminals += 1;
            match sim.finish() {
                Ok(r) => report.record_run(&r, &cfg.inputs, ctx.clone()),
                Err(e) => report.record_error(&e, ctx.clone()),
            }
            continue;
        }
        // Push in reverse so the oldest choice is explored first.
        for &i in window.iter().rev() {
            let mut next = sim.clone();
            if let Err(e) = next.deliver(Choice::Deliver(i)) {
                report.record_error(&e, ctx.clone());
                continue;
            }
            if seen.insert(next.config_hash()) {
                if seen.len() as u64 > cfg.node_budget {
                    complete = false;
                    stack.clear();
                    break;
                }
                stack.push(next);
            }
        }
    }
    let stats = PlacementStats { crash, nodes: seen.len() as u64, terminals, complete };
    Ok((stats, report))
}

/// Depth-first search over every schedule in which each delivery is one of
/// the `window` oldest deliverable envelopes, for each crash placement.
///
/// Configurations are deduplicated by [`Sim::config_hash`], so each distinct
/// configuration is expanded once. A configuration is terminal when nothing
/// is deliverable or, with `stop_when_decided`, when every correct process
/// has decided. Placements run in parallel; the result does not depend on
/// the thread count.
pub fn bounded_exhaustive(cfg: &ExhaustiveConfig) -> Result<ExhaustiveReport, ExplorerError> {
    if cfg.window == 0 {
        return Err(ExplorerError::InvalidConfig("reorder window must be at least 1".into()));
    }
    if cfg.inputs.len() != cfg.n {
        return Err(ExplorerError::InvalidConfig(format!("{} inputs for n={}", cfg.inputs.len(), cfg.n)));
    }
    let parts: Vec<_> = cfg.placements().into_par_iter().map(|c| explore_one(cfg, c)).collect();
    let mut out = ExhaustiveReport {
        window: cfg.window,
        node_budget: cfg.node_budget,
        nodes: 0,
        terminals: 0,
        placements: Vec::new(),
        report: PropertyReport::default(),
    };
    for part in parts {
        let (stats, report) = part?;
        out.nodes += stats.nodes;
        out.terminals += stats.terminals;
        out.placements.push(stats);
        out.report.merge(report);
    }
    if !out.complete() {
        let nodes = out.nodes;
        return Err(ExplorerError::StateSpaceBudgetExceeded { budget: cfg.node_budget, nodes, partial: Box::new(out) });
    }
    Ok(out)
}
