use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Choice, Scheduler, Sim, SimError};
use crate::protocol::{Envelope, KindTag, ProcessId};

/// Always delivers the oldest envelope.
#[derive(Clone, Copy, Debug, Default)]
pub struct FifoScheduler;

impl Scheduler for FifoScheduler {
    fn choose(&mut self, sim: &Sim) -> Result<Option<Choice>, SimError> {
        Ok((!sim.buffer().is_empty()).then_some(Choice::Deliver(0)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomConfig {
    pub seed: u64,
    /// An envelope older than this many scheduling decisions is delivered next.
    pub fairness_bound: u64,
    /// Null receives allowed per destination per run.
    pub null_budget: u32,
    pub null_probability: f64,
    /// When set, each directed link gets a fixed weight in `[1, skew]` on a
    /// log scale and envelopes are picked with probability proportional to it.
    pub link_skew: Option<f64>,
}

impl Default for RandomConfig {
    fn default() -> Self {
        RandomConfig { seed: 0, fairness_bound: 64, null_budget: 16, null_probability: 0.02, link_skew: None }
    }
}

impl RandomConfig {
    pub fn with_seed(seed: u64) -> Self {
        RandomConfig { seed, ..Default::default() }
    }
}

/// Seeded random scheduler with an age bound that keeps runs admissible.
#[derive(Clone, Debug)]
pub struct RandomScheduler {
    cfg: RandomConfig,
    rng: ChaCha8Rng,
    weights: Option<Vec<f64>>,
    n: usize,
}

impl RandomScheduler {
    pub fn new(cfg: RandomConfig, n: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let weights = cfg.link_skew.map(|s| {
            let ln = s.max(1.0).ln();
            (0..n * n).map(|_| (rng.random::<f64>() * ln).exp()).collect()
        });
        RandomScheduler { cfg, rng, weights, n }
    }

    fn weight(&self, env: &Envelope) -> f64 {
        match &self.weights {
            Some(w) => w[env.sender.slot() * self.n + env.destination.slot()],
            None => 1.0,
        }
    }
}

impl Scheduler for RandomScheduler {
    fn choose(&mut self, sim: &Sim) -> Result<Option<Choice>, SimError> {
        let buf = sim.buffer();
        if buf.is_empty() {
            return Ok(None);
        }
        if sim.step_count().saturating_sub(buf[0].enqueued_at) >= self.cfg.fairness_bound {
            return Ok(Some(Choice::Deliver(0)));
        }
        if self.cfg.null_probability > 0.0 && self.rng.random_bool(self.cfg.null_probability.min(1.0)) {
            let d = ProcessId::from_slot(self.rng.random_range(0..sim.n()));
            if sim.null_used(d) < self.cfg.null_budget {
                return Ok(Some(Choice::Null(d)));
            }
        }
        if self.weights.is_none() {
            return Ok(Some(Choice::Deliver(self.rng.random_range(0..buf.len()))));
        }
        let total: f64 = buf.iter().map(|p| self.weight(&p.env)).sum();
        let mut x = self.rng.random::<f64>() * total;
        for (i, p) in buf.iter().enumerate() {
            x -= self.weight(&p.env);
            if x <= 0.0 {
                return Ok(Some(Choice::Deliver(i)));
            }
        }
        Ok(Some(Choice::Deliver(buf.len() - 1)))
    }
}

/// Matches envelopes by any combination of originator, sender, destination and kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Selector {
    pub originator: Option<ProcessId>,
    pub sender: Option<ProcessId>,
    pub destination: Option<ProcessId>,
    pub kind: Option<KindTag>,
}

impl Selector {
    pub fn any() -> Self {
        Selector::default()
    }
    pub fn kind(kind: KindTag) -> Self {
        Selector { kind: Some(kind), ..Default::default() }
    }
    pub fn from(mut self, originator: ProcessId) -> Self {
        self.originator = Some(originator);
        self
    }
    pub fn via(mut self, sender: ProcessId) -> Self {
        self.sender = Some(sender);
        self
    }
    pub fn to(mut self, destination: ProcessId) -> Self {
        self.destination = Some(destination);
        self
    }

    pub fn matches(&self, env: &Envelope) -> bool {
        self.originator.is_none_or(|o| o == env.originator)
            && self.sender.is_none_or(|s| s == env.sender)
            && self.destination.is_none_or(|d| d == env.destination)
            && self.kind.is_none_or(|k| k == env.kind.tag())
    }
}

impl std::fmt::Display for Selector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let show = |p: Option<ProcessId>| p.map_or("*".to_string(), |p| p.to_string());
        write!(
            f,
            "{} from {} via {} to {}",
            self.kind.map_or("*", |k| k.name()),
            show(self.originator),
            show(self.sender),
            show(self.destination)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptStep {
    /// Deliver the oldest matching envelope; the script desyncs if none exists.
    Deliver(Selector),
    /// Keep matching envelopes, present and future, out of `RunUntilQuiet`.
    Hold(Selector),
    Release(Selector),
    /// Deliver oldest-first among envelopes that are not held, until none remain.
    RunUntilQuiet,
}

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Fallback {
    Fifo,
    Random(RandomScheduler),
}

/// Replays a script, then hands over to a fallback once the script ends.
/// All holds are dropped when the script is exhausted.
#[derive(Clone, Debug)]
pub struct ScriptedScheduler {
    steps: Vec<ScriptStep>,
    pos: usize,
    holds: Vec<Selector>,
    fallback: Fallback,
}

impl ScriptedScheduler {
    pub fn new(steps: Vec<ScriptStep>, fallback: Fallback) -> Self {
        ScriptedScheduler { steps, pos: 0, holds: Vec::new(), fallback }
    }

    fn held(&self, env: &Envelope) -> bool {
        self.holds.iter().any(|h| h.matches(env))
    }

    pub fn finished(&self) -> bool {
        self.pos >= self.steps.len()
    }
}

impl Scheduler for ScriptedScheduler {
    fn choose(&mut self, sim: &Sim) -> Result<Option<Choice>, SimError> {
        while let Some(step) = self.steps.get(self.pos) {
            match step {
                ScriptStep::Hold(s) => {
                    self.holds.push(*s);
                    self.pos += 1;
                }
                ScriptStep::Release(s) => {
                    self.holds.retain(|h| h != s);
                    self.pos += 1;
                }
                ScriptStep::Deliver(s) => {
                    let i = sim
                        .buffer()
                        .iter()
                        .position(|p| s.matches(&p.env))
                        .ok_or_else(|| SimError::ScriptDesync { step: self.pos, detail: s.to_string() })?;
                    self.pos += 1;
                    return Ok(Some(Choice::Deliver(i)));
                }
                ScriptStep::RunUntilQuiet => match sim.buffer().iter().position(|p| !self.held(&p.env)) {
                    Some(i) => return Ok(Some(Choice::Deliver(i))),
                    None => self.pos += 1,
                },
            }
        }
        self.holds.clear();
        match &mut self.fallback {
            Fallback::Fifo => FifoScheduler.choose(sim),
            Fallback::Random(r) => r.choose(sim),
        }
    }
}
