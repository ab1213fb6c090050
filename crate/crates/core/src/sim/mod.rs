//! Asynchronous execution environment: message buffer, crash injection and
//! delivery schedulers.

mod sched;
mod trace;

pub use sched::{Fallback, FifoScheduler, RandomConfig, RandomScheduler, ScriptStep, ScriptedScheduler, Selector};
pub use trace::{read_trace_jsonl, replay, replay_with_gate, write_trace_jsonl, TraceRecord};

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::digest::{encode_envelope, encode_value, encode_vector};
use crate::protocol::{
    BlendGate, Completion, Envelope, Phase, ProcessId, ProcessState, ProtocolError, Value, ValueVector,
};

/// Hard cap on scheduling decisions per run.
pub const DEFAULT_STEP_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("expected {expected} inputs, got {got}")]
    InputCount { expected: usize, got: usize },
    #[error("at most one process may crash, got {0}")]
    MultipleCrashes(usize),
    #[error("no such message: {0}")]
    NoSuchMessage(String),
    #[error("null delivery budget exhausted for {0}")]
    NullBudgetExhausted(ProcessId),
    #[error("script step {step} matched nothing: {detail}")]
    ScriptDesync { step: usize, detail: String },
    #[error("run stalled after {steps} steps with undecided correct processes {undecided:?}")]
    StalledRun { steps: u64, undecided: Vec<ProcessId>, partial: Box<RunResult> },
    #[error("step limit {0} reached")]
    StepLimit(u64),
    #[error("invariant broken: {0}")]
    Invariant(String),
}

/// Which process crashes, and after how many of its own atomic steps.
///
/// Step 1 of every process is its initial broadcast, so point 0 means the
/// process never sends anything and point 1 means it halts right after
/// broadcasting its initial value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CrashSpec {
    pub process: Option<ProcessId>,
    pub crash_point: u32,
}

impl CrashSpec {
    pub fn none() -> Self {
        CrashSpec::default()
    }

    pub fn at(process: ProcessId, crash_point: u32) -> Self {
        CrashSpec { process: Some(process), crash_point }
    }

    /// Builds a spec from a list of placements; more than one is rejected.
    pub fn from_list(list: &[(ProcessId, u32)]) -> Result<Self, SimError> {
        match list {
            [] => Ok(CrashSpec::none()),
            [(p, k)] => Ok(CrashSpec::at(*p, *k)),
            _ => Err(SimError::MultipleCrashes(list.len())),
        }
    }
}

impl std::str::FromStr for CrashSpec {
    type Err = String;
    /// Parses `none` or `P<i>@<point>` (the `P` is optional).
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "none" {
            return Ok(CrashSpec::none());
        }
        let bad = || format!("bad crash spec '{s}' (expected none or P<i>@<point>)");
        let (p, k) = s.split_once('@').ok_or_else(bad)?;
        let p: u16 = p.strip_prefix(['P', 'p']).unwrap_or(p).parse().map_err(|_| bad())?;
        let k: u32 = k.parse().map_err(|_| bad())?;
        if p == 0 {
            return Err(bad());
        }
        Ok(CrashSpec::at(ProcessId::from_slot(p as usize - 1), k))
    }
}

impl std::fmt::Display for CrashSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.process {
            None => f.write_str("none"),
            Some(p) => write!(f, "{p}@{}", self.crash_point),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Pending {
    pub env: Envelope,
    /// Scheduling decision count when the envelope entered the buffer.
    pub enqueued_at: u64,
    key_hash: u64,
}

impl Pending {
    fn new(env: Envelope, enqueued_at: u64) -> Self {
        let mut h = DefaultHasher::new();
        env.hash(&mut h);
        Pending { env, enqueued_at, key_hash: h.finish() }
    }

    /// Schedule-independent age: message kind in protocol order, direct
    /// copies before relayed ones, then originator, destination and sender.
    pub fn logical_key(&self) -> (usize, bool, usize, usize, usize) {
        let e = &self.env;
        (e.kind.tag().index(), !e.is_direct(), e.originator.get(), e.destination.get(), e.sender.get())
    }
}

fn mix(mut x: u64) -> u64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    x ^ (x >> 33)
}

/// What the scheduler picks next.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Choice {
    /// Deliver the envelope at this buffer index (0 is the oldest).
    Deliver(usize),
    /// A receive at this destination that returns nothing.
    Null(ProcessId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Deliver { step: u64, envelope: Envelope },
    Null { step: u64, destination: ProcessId },
}

/// Outcome of a completed run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub n: usize,
    pub inputs: Vec<Value>,
    pub crash: CrashSpec,
    /// The crash process, if it actually halted during the run.
    pub crashed: Option<ProcessId>,
    pub decisions: Vec<Option<ValueVector>>,
    /// How each process entered the Decision phase, if it did.
    pub completions: Vec<Option<Completion>>,
    pub steps: u64,
    pub sent: u64,
    pub delivered: u64,
    pub consumed_by_crashed: u64,
    pub undelivered: u64,
    /// Runtime invariant breaches observed by the simulator.
    pub anomalies: Vec<String>,
    pub digest: String,
}

impl RunResult {
    pub fn is_correct(&self, p: ProcessId) -> bool {
        self.crashed != Some(p)
    }

    pub fn decision(&self, p: ProcessId) -> Option<&ValueVector> {
        self.decisions[p.slot()].as_ref()
    }

    /// Hex digest of the trace and decisions.
    pub fn run_digest(&self) -> &str {
        &self.digest
    }

    /// Number of processes that entered Decision with full and with one-empty
    /// vectors, in that order.
    pub fn completion_split(&self) -> (usize, usize) {
        let full = self.completions.iter().flatten().filter(|c| c.is_full()).count();
        let with_empty = self.completions.iter().flatten().count() - full;
        (full, with_empty)
    }
}

/// Free-function form of [`RunResult::run_digest`].
pub fn run_digest(result: &RunResult) -> &str {
    result.run_digest()
}

/// A configuration of the asynchronous system plus its run history.
#[derive(Clone, Debug)]
pub struct Sim {
    n: usize,
    inputs: Vec<Value>,
    crash: CrashSpec,
    processes: Vec<ProcessState>,
    buffer: Vec<Pending>,
    steps_taken: Vec<u32>,
    process_hashes: Vec<u64>,
    null_used: Vec<u32>,
    step_count: u64,
    sent: u64,
    delivered: u64,
    consumed_by_crashed: u64,
    phases: Vec<Phase>,
    outputs: Vec<Option<ValueVector>>,
    anomalies: Vec<String>,
    record_trace: bool,
    trace: Vec<TraceEvent>,
    hasher: Sha256,
    scratch: Vec<Envelope>,
}

impl Sim {
    /// Builds the initial configuration and performs every initial broadcast
    /// whose process is not crashing at point 0.
    pub fn new(n: usize, inputs: &[Value], crash: CrashSpec, round: u64) -> Result<Sim, SimError> {
        Sim::with_gate(n, inputs, crash, round, BlendGate::default())
    }

    /// Like [`Sim::new`] with a non-default blend gate for every process.
    pub fn with_gate(
        n: usize,
        inputs: &[Value],
        crash: CrashSpec,
        round: u64,
        gate: BlendGate,
    ) -> Result<Sim, SimError> {
        if inputs.len() != n {
            return Err(SimError::InputCount { expected: n, got: inputs.len() });
        }
        let mut processes = Vec::with_capacity(n);
        for (slot, v) in inputs.iter().enumerate() {
            processes.push(ProcessState::new(ProcessId::from_slot(slot), n, v.clone(), round)?.with_gate(gate));
        }
        if let Some(p) = crash.process {
            ProcessId::new(p.get(), n)?;
        }
        let mut hasher = Sha256::new();
        let mut header = Vec::new();
        header.extend_from_slice(&(n as u16).to_le_bytes());
        header.extend_from_slice(&round.to_le_bytes());
        for v in inputs {
            encode_value(&mut header, v);
        }
        header.extend_from_slice(&(crash.process.map_or(0, |p| p.get()) as u16).to_le_bytes());
        header.extend_from_slice(&crash.crash_point.to_le_bytes());
        header.push(gate as u8);
        hasher.update(&header);
        let mut sim = Sim {
            n,
            inputs: inputs.to_vec(),
            crash,
            processes,
            buffer: Vec::new(),
            steps_taken: vec![0; n],
            process_hashes: vec![0; n],
            null_used: vec![0; n],
            step_count: 0,
            sent: 0,
            delivered: 0,
            consumed_by_crashed: 0,
            phases: vec![Phase::Initial; n],
            outputs: vec![None; n],
            anomalies: Vec::new(),
            record_trace: true,
            trace: Vec::new(),
            hasher,
            scratch: Vec::new(),
        };
        for p in ProcessId::all(n) {
            if sim.is_halted(p) {
                continue;
            }
            let out = sim.processes[p.slot()].start_round()?;
            sim.steps_taken[p.slot()] += 1;
            sim.enqueue(out);
        }
        for p in ProcessId::all(n) {
            sim.rehash(p);
        }
        Ok(sim)
    }

    /// Disables trace recording; the digest is still computed.
    pub fn without_trace(mut self) -> Self {
        self.record_trace = false;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn inputs(&self) -> &[Value] {
        &self.inputs
    }
    pub fn crash(&self) -> CrashSpec {
        self.crash
    }
    pub fn processes(&self) -> &[ProcessState] {
        &self.processes
    }
    pub fn process(&self, p: ProcessId) -> &ProcessState {
        &self.processes[p.slot()]
    }
    pub fn buffer(&self) -> &[Pending] {
        &self.buffer
    }
    pub fn step_count(&self) -> u64 {
        self.step_count
    }
    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }
    pub fn null_used(&self, p: ProcessId) -> u32 {
        self.null_used[p.slot()]
    }

    /// Atomic steps taken so far by `p`.
    pub fn steps_taken(&self, p: ProcessId) -> u32 {
        self.steps_taken[p.slot()]
    }

    /// Whether `p` has reached its crash point.
    pub fn is_halted(&self, p: ProcessId) -> bool {
        self.crash.process == Some(p) && self.steps_taken[p.slot()] >= self.crash.crash_point
    }

    /// Correct processes that have not decided yet.
    pub fn undecided(&self) -> Vec<ProcessId> {
        ProcessId::all(self.n)
            .filter(|&p| !self.is_halted(p) && self.processes[p.slot()].phase() != Phase::Decided)
            .collect()
    }

    fn enqueue(&mut self, out: Vec<Envelope>) {
        self.sent += out.len() as u64;
        let at = self.step_count;
        self.buffer.extend(out.into_iter().map(|env| Pending::new(env, at)));
    }

    fn rehash(&mut self, p: ProcessId) {
        let mut h = DefaultHasher::new();
        self.processes[p.slot()].behavior_hash(&mut h);
        self.steps_taken[p.slot()].hash(&mut h);
        self.process_hashes[p.slot()] = h.finish();
    }

    /// Buffer indices of the `w` deliverable envelopes with the smallest
    /// [`Pending::logical_key`], oldest first. Envelopes addressed to a halted process
    /// are never deliverable.
    pub fn window(&self, w: usize) -> Vec<usize> {
        let mut best: Vec<usize> = Vec::with_capacity(w + 1);
        for (i, p) in self.buffer.iter().enumerate() {
            if self.is_halted(p.env.destination) {
                continue;
            }
            let key = p.logical_key();
            let at = best.partition_point(|&j| self.buffer[j].logical_key() < key);
            if at < w {
                best.insert(at, i);
                best.truncate(w);
            }
        }
        best
    }

    /// Executes one scheduling decision.
    pub fn deliver(&mut self, choice: Choice) -> Result<(), SimError> {
        match choice {
            Choice::Null(d) => {
                if d.get() > self.n {
                    return Err(SimError::NoSuchMessage(format!("null receive at {d}")));
                }
                self.step_count += 1;
                self.null_used[d.slot()] += 1;
                let mut buf = Vec::with_capacity(11);
                buf.extend_from_slice(&self.step_count.to_le_bytes());
                buf.push(0);
                buf.extend_from_slice(&(d.get() as u16).to_le_bytes());
                self.hasher.update(&buf);
                if self.record_trace {
                    self.trace.push(TraceEvent::Null { step: self.step_count, destination: d });
                }
                Ok(())
            }
            Choice::Deliver(i) => {
                if i >= self.buffer.len() {
                    return Err(SimError::NoSuchMessage(format!("buffer index {i} of {}", self.buffer.len())));
                }
                let env = self.buffer.remove(i).env;
                self.step_count += 1;
                self.delivered += 1;
                let mut buf = Vec::with_capacity(64);
                buf.extend_from_slice(&self.step_count.to_le_bytes());
                buf.push(1);
                encode_envelope(&mut buf, &env);
                self.hasher.update(&buf);
                let d = env.destination;
                if self.is_halted(d) {
                    self.consumed_by_crashed += 1;
                } else {
                    let mut out = std::mem::take(&mut self.scratch);
                    out.clear();
                    self.processes[d.slot()].handle_delivery_into(&env, &mut out)?;
                    self.steps_taken[d.slot()] += 1;
                    self.sent += out.len() as u64;
                    let at = self.step_count;
                    self.buffer.extend(out.drain(..).map(|e| Pending::new(e, at)));
                    self.scratch = out;
                    self.audit(d);
                    self.rehash(d);
                }
                if self.record_trace {
                    self.trace.push(TraceEvent::Deliver { step: self.step_count, envelope: env });
                }
                Ok(())
            }
        }
    }

    fn audit(&mut self, p: ProcessId) {
        let st = &self.processes[p.slot()];
        if st.phase() < self.phases[p.slot()] {
            self.anomalies.push(format!("{p} phase regressed to {:?}", st.phase()));
        }
        self.phases[p.slot()] = st.phase();
        match (&self.outputs[p.slot()], st.output()) {
            (None, Some(o)) => self.outputs[p.slot()] = Some(o.clone()),
            (Some(prev), cur) if cur != Some(prev) => {
                self.anomalies.push(format!("{p} output changed after decision"));
            }
            _ => {}
        }
        if let (Some(c), Some(cur)) = (st.completion(), st.current_v()) {
            if c.is_full() && !cur.is_full() {
                self.anomalies.push(format!("{p} current vector went from full back to one-empty"));
            }
        }
    }

    /// Hash of the current configuration, independent of how it was reached.
    ///
    /// Buffer order is ignored: the buffer is hashed as a multiset of
    /// envelopes.
    pub fn config_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.process_hashes.hash(&mut h);
        let buffer = self.buffer.iter().fold(0u64, |acc, p| acc.wrapping_add(mix(p.key_hash)));
        buffer.hash(&mut h);
        self.buffer.len().hash(&mut h);
        h.finish()
    }

    /// Snapshot of the run so far.
    pub fn result(&self) -> RunResult {
        let mut hasher = self.hasher.clone();
        let mut buf = Vec::new();
        for p in &self.processes {
            match p.output() {
                None => buf.push(0),
                Some(v) => {
                    buf.push(1);
                    encode_vector(&mut buf, v);
                }
            }
        }
        hasher.update(&buf);
        let crashed = self.crash.process.filter(|&p| self.is_halted(p));
        RunResult {
            n: self.n,
            inputs: self.inputs.clone(),
            crash: self.crash,
            crashed,
            decisions: self.processes.iter().map(|p| p.output().cloned()).collect(),
            completions: self.processes.iter().map(|p| p.completion().cloned()).collect(),
            steps: self.step_count,
            sent: self.sent,
            delivered: self.delivered,
            consumed_by_crashed: self.consumed_by_crashed,
            undelivered: self.buffer.len() as u64,
            anomalies: self.anomalies.clone(),
            digest: hex::encode(hasher.finalize()),
        }
    }

    /// Ends the run: the buffer must be empty, and every correct process
    /// must have decided.
    pub fn finish(&self) -> Result<RunResult, SimError> {
        let result = self.result();
        let undecided = self.undecided();
        if !undecided.is_empty() {
            return Err(SimError::StalledRun { steps: self.step_count, undecided, partial: Box::new(result) });
        }
        Ok(result)
    }
}

/// Free-function form of [`Sim::new`].
pub fn init_sim(n: usize, inputs: &[Value], crash: CrashSpec, round: u64) -> Result<Sim, SimError> {
    Sim::new(n, inputs, crash, round)
}

/// Picks the next delivery for a run.
pub trait Scheduler {
    /// `None` ends the run.
    fn choose(&mut self, sim: &Sim) -> Result<Option<Choice>, SimError>;
}

/// Delivers until the buffer is empty or the scheduler stops, then checks
/// that every correct process decided.
pub fn run_to_completion(sim: &mut Sim, scheduler: &mut dyn Scheduler) -> Result<RunResult, SimError> {
    run_with_limit(sim, scheduler, DEFAULT_STEP_LIMIT)
}

pub fn run_with_limit(sim: &mut Sim, scheduler: &mut dyn Scheduler, limit: u64) -> Result<RunResult, SimError> {
    while !sim.buffer.is_empty() {
        if sim.step_count >= limit {
            return Err(SimError::StepLimit(limit));
        }
        match scheduler.choose(sim)? {
            Some(c) => sim.deliver(c)?,
            None => break,
        }
    }
    sim.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> Vec<Value> {
        Value::parse_bits(s).unwrap()
    }

    #[test]
    fn init_broadcasts_everything() {
        let sim = Sim::new(5, &bits("11001"), CrashSpec::none(), 0).unwrap();
        assert_eq!(sim.buffer().len(), 20);
    }

    #[test]
    fn crash_at_zero_sends_nothing() {
        let p5 = ProcessId::from_slot(4);
        let sim = Sim::new(5, &bits("11001"), CrashSpec::at(p5, 0), 0).unwrap();
        assert_eq!(sim.buffer().len(), 16);
        assert!(sim.buffer().iter().all(|e| e.env.originator != p5));
    }

    #[test]
    fn two_crashes_rejected() {
        let l = [(ProcessId::from_slot(0), 1), (ProcessId::from_slot(1), 1)];
        assert_eq!(CrashSpec::from_list(&l), Err(SimError::MultipleCrashes(2)));
    }

    #[test]
    fn direct_receipt_is_retransmitted() {
        let mut sim = Sim::new(5, &bits("11001"), CrashSpec::none(), 0).unwrap();
        let p1 = ProcessId::from_slot(0);
        let i = sim.buffer().iter().position(|e| e.env.destination == p1).unwrap();
        sim.deliver(Choice::Deliver(i)).unwrap();
        assert_eq!(sim.buffer().len(), 19 + 3);
        assert!(sim.process(p1).known_values()[1].is_some());
    }

    #[test]
    fn crashed_destination_only_consumes() {
        let p5 = ProcessId::from_slot(4);
        let mut sim = Sim::new(5, &bits("11001"), CrashSpec::at(p5, 1), 0).unwrap();
        let i = sim.buffer().iter().position(|e| e.env.destination == p5).unwrap();
        let before = sim.process(p5).clone();
        sim.deliver(Choice::Deliver(i)).unwrap();
        assert_eq!(sim.buffer().len(), 19);
        assert_eq!(sim.process(p5), &before);
        assert_eq!(sim.trace().len(), 1);
    }

    #[test]
    fn null_receive_only_grows_trace() {
        let mut sim = Sim::new(5, &bits("11001"), CrashSpec::none(), 0).unwrap();
        sim.deliver(Choice::Null(ProcessId::from_slot(2))).unwrap();
        assert_eq!(sim.buffer().len(), 20);
        assert_eq!(sim.trace().len(), 1);
        assert!(sim.deliver(Choice::Deliver(99)).is_err());
    }

    #[test]
    fn fifo_run_decides() {
        let mut sim = Sim::new(5, &bits("11001"), CrashSpec::none(), 0).unwrap();
        let r = run_to_completion(&mut sim, &mut FifoScheduler).unwrap();
        assert!(r.decisions.iter().all(|d| d.is_some()));
        assert_eq!(r.sent, r.delivered);
        assert!(r.anomalies.is_empty());
    }
}
