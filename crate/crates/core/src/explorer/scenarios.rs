//! Hand-built schedules for N = 5, one per proof case. Each script pins the
//! set of processes with equal first proposals by holding back one initial
//! value from them, then steers the remaining proposals.

use serde::{Deserialize, Serialize};

use super::{ExplorerError, Property, PropertyReport, Violation};
use crate::protocol::{KindTag, ProcessId, Value};
use crate::sim::{
    run_to_completion, CrashSpec, Fallback, RandomConfig, RandomScheduler, RunResult, ScriptStep, ScriptedScheduler,
    Selector, Sim,
};

/// Number of processes all scripts are written for.
pub const SCENARIO_N: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedOutcome {
    /// Processes entering Decision with a full vector.
    pub full_entrants: usize,
    /// Processes entering Decision with a one-empty vector.
    pub empty_entrants: usize,
    /// Whether the common decision is a full vector.
    pub decides_full: bool,
    /// Empty slot of the common decision when it is not full.
    pub decided_empty_slot: Option<ProcessId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub name: &'static str,
    pub description: &'static str,
    pub crash: CrashSpec,
    pub steps: Vec<ScriptStep>,
    pub expected: ExpectedOutcome,
}

impl ScenarioScript {
    pub fn has_crash(&self) -> bool {
        self.crash.process.is_some()
    }

    pub fn inputs() -> Vec<Value> {
        Value::parse_bits("11001").expect("literal bits")
    }

    /// Runs the script, then finishes with `fallback`.
    pub fn run(&self, fallback: Fallback) -> Result<RunResult, ExplorerError> {
        let mut sim = Sim::new(SCENARIO_N, &Self::inputs(), self.crash, 0)?;
        let mut sched = ScriptedScheduler::new(self.steps.clone(), fallback);
        Ok(run_to_completion(&mut sim, &mut sched)?)
    }

    /// Differences between `result` and the expected outcome.
    pub fn mismatches(&self, result: &RunResult) -> Vec<String> {
        let mut out = Vec::new();
        let (full, empty) = result.completion_split();
        let e = &self.expected;
        if (full, empty) != (e.full_entrants, e.empty_entrants) {
            out.push(format!("entry split {full}F+{empty}E, expected {}F+{}E", e.full_entrants, e.empty_entrants));
        }
        let decisions: Vec<_> = result.decisions.iter().flatten().collect();
        if decisions.windows(2).any(|w| w[0] != w[1]) {
            out.push("decisions differ".into());
        }
        if let Some(d) = decisions.first() {
            if d.is_full() != e.decides_full {
                out.push(format!("decided {d}, expected {}", if e.decides_full { "full" } else { "one-empty" }));
            }
            if !e.decides_full && d.first_empty() != e.decided_empty_slot {
                out.push(format!("decided {d}, expected empty slot {:?}", e.decided_empty_slot));
            }
        }
        let correct = (0..SCENARIO_N).filter(|&i| result.is_correct(ProcessId::from_slot(i))).count();
        if decisions.len() != correct {
            out.push(format!("{} of {correct} correct processes decided", decisions.len()));
        }
        out
    }
}

fn p(i: usize) -> ProcessId {
    ProcessId::from_slot(i - 1)
}

fn hold_initial(from: usize, to: &[usize]) -> Vec<ScriptStep> {
    to.iter().map(|&d| ScriptStep::Hold(Selector::kind(KindTag::InitialValue).from(p(from)).to(p(d)))).collect()
}

fn deliver_direct_initial(from: usize, to: usize) -> ScriptStep {
    ScriptStep::Deliver(Selector::kind(KindTag::InitialValue).from(p(from)).via(p(from)).to(p(to)))
}

fn expected(full: usize, empty: usize, decided_empty_slot: Option<usize>) -> ExpectedOutcome {
    ExpectedOutcome {
        full_entrants: full,
        empty_entrants: empty,
        decides_full: decided_empty_slot.is_none(),
        decided_empty_slot: decided_empty_slot.map(p),
    }
}

/// The eight scripts, in order `a` through `h`.
pub fn scenario_library() -> Vec<ScenarioScript> {
    let e4 = [1, 2, 3, 4];
    let first_from = |o: usize| Selector::kind(KindTag::FirstProposal).from(p(o));
    let mut lib = Vec::new();

    let mut steps = hold_initial(5, &e4);
    steps.push(ScriptStep::Hold(first_from(5)));
    steps.push(ScriptStep::RunUntilQuiet);
    lib.push(ScenarioScript {
        name: "a",
        description: "no crash; P1..P4 propose alike and decide before P5's proposal reaches anyone",
        crash: CrashSpec::none(),
        steps,
        expected: expected(0, 5, Some(5)),
    });

    let mut steps = hold_initial(5, &e4);
    for d in [1, 2, 3] {
        steps.push(ScriptStep::Hold(first_from(4).to(p(d))));
    }
    steps.push(ScriptStep::RunUntilQuiet);
    for d in e4 {
        steps.push(ScriptStep::Release(Selector::kind(KindTag::InitialValue).from(p(5)).to(p(d))));
    }
    steps.push(ScriptStep::RunUntilQuiet);
    lib.push(ScenarioScript {
        name: "b",
        description: "no crash; P4's first proposal is delayed to P1..P3, which blend and complete full",
        crash: CrashSpec::none(),
        steps,
        expected: expected(3, 2, None),
    });

    let mut steps = hold_initial(5, &e4);
    steps.push(ScriptStep::Hold(Selector::kind(KindTag::DecisionSeed)));
    steps.push(ScriptStep::RunUntilQuiet);
    for d in e4 {
        steps.push(ScriptStep::Release(Selector::kind(KindTag::InitialValue).from(p(5)).to(p(d))));
    }
    steps.push(ScriptStep::RunUntilQuiet);
    lib.push(ScenarioScript {
        name: "c",
        description: "no crash; outsider P5 completes with the common proposal, its own proposal reaches P1..P4 after they completed",
        crash: CrashSpec::none(),
        steps,
        expected: expected(0, 5, Some(5)),
    });

    lib.push(ScenarioScript {
        name: "d",
        description: "P5 crashes before broadcasting its initial value",
        crash: CrashSpec::at(p(5), 0),
        steps: vec![ScriptStep::RunUntilQuiet],
        expected: expected(0, 4, Some(5)),
    });

    let mut steps = hold_initial(5, &[1, 2, 3]);
    steps.push(ScriptStep::RunUntilQuiet);
    lib.push(ScenarioScript {
        name: "e",
        description:
            "P4, which would propose like P1..P3, crashes after its initial value; P1..P3 blend on outsider P5",
        crash: CrashSpec::at(p(4), 1),
        steps,
        expected: expected(3, 1, None),
    });

    let mut steps = vec![deliver_direct_initial(1, 5), deliver_direct_initial(2, 5), deliver_direct_initial(3, 5)];
    steps.extend(hold_initial(5, &e4));
    steps.push(ScriptStep::RunUntilQuiet);
    lib.push(ScenarioScript {
        name: "f",
        description: "outsider P5 crashes right after broadcasting its first proposal; P1..P4 complete alike",
        crash: CrashSpec::at(p(5), 4),
        steps,
        expected: expected(0, 4, Some(5)),
    });

    let mut steps = hold_initial(5, &[2, 3, 4]);
    for d in [2, 3, 4] {
        for o in [2, 3, 4] {
            if o != d {
                steps.push(ScriptStep::Hold(first_from(o).to(p(d))));
            }
        }
    }
    steps.push(ScriptStep::RunUntilQuiet);
    for d in [2, 3, 4] {
        steps.push(ScriptStep::Release(Selector::kind(KindTag::InitialValue).from(p(5)).to(p(d))));
    }
    steps.push(ScriptStep::RunUntilQuiet);
    lib.push(ScenarioScript {
        name: "g",
        description: "P1 crashes after its initial value; outsider P5's proposal reaches P2..P4 before theirs do",
        crash: CrashSpec::at(p(1), 1),
        steps,
        expected: expected(3, 1, None),
    });

    let mut steps = vec![deliver_direct_initial(2, 5), deliver_direct_initial(3, 5), deliver_direct_initial(4, 5)];
    steps.extend(hold_initial(4, &[1, 2, 3]));
    steps.push(ScriptStep::Hold(Selector::kind(KindTag::InitialValue).from(p(5)).to(p(4))));
    steps.push(ScriptStep::RunUntilQuiet);
    lib.push(ScenarioScript {
        name: "h",
        description:
            "P1..P3 propose alike; outsider P5 crashes after its first proposal; P4 completes with the common proposal",
        crash: CrashSpec::at(p(5), 4),
        steps,
        expected: expected(3, 1, None),
    });
    lib
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioFilter {
    All,
    Crash,
    NoCrash,
    Named(String),
}

impl std::str::FromStr for ScenarioFilter {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" => Ok(ScenarioFilter::All),
            "crash" => Ok(ScenarioFilter::Crash),
            "no-crash" => Ok(ScenarioFilter::NoCrash),
            _ if scenario_library().iter().any(|sc| sc.name == s) => Ok(ScenarioFilter::Named(s.to_string())),
            _ => Err(format!("unknown scenario filter '{s}' (expected all, crash, no-crash or a..h)")),
        }
    }
}

impl ScenarioFilter {
    pub fn accepts(&self, s: &ScenarioScript) -> bool {
        match self {
            ScenarioFilter::All => true,
            ScenarioFilter::Crash => s.has_crash(),
            ScenarioFilter::NoCrash => !s.has_crash(),
            ScenarioFilter::Named(n) => s.name == n,
        }
    }
}

/// Runs every selected script once with a FIFO tail and once per random
/// tail seed, checking both the generic properties and the expected outcome.
pub fn scripted_scenarios(filter: &ScenarioFilter, tail_seeds: &[u64]) -> Result<PropertyReport, ExplorerError> {
    let mut report = PropertyReport::default();
    let inputs = ScenarioScript::inputs();
    for script in scenario_library().into_iter().filter(|s| filter.accepts(s)) {
        let mut tails = vec![("fifo".to_string(), Fallback::Fifo)];
        for &seed in tail_seeds {
            let rs = RandomScheduler::new(RandomConfig::with_seed(seed), SCENARIO_N);
            tails.push((format!("seed={seed}"), Fallback::Random(rs)));
        }
        for (tail, fallback) in tails {
            let ctx = Some(format!("scenario={} tail={tail}", script.name));
            match script.run(fallback) {
                Ok(r) => {
                    report.record_run(&r, &inputs, ctx.clone());
                    for m in script.mismatches(&r) {
                        report.push_violation(Violation {
                            property: Property::ScenarioOutcome,
                            run_digest: r.digest.clone(),
                            detail: m,
                            context: ctx.clone(),
                            trace: None,
                        });
                    }
                    report.cover(format!("scenario:{}", script.name));
                }
                Err(ExplorerError::Sim(e @ crate::sim::SimError::ScriptDesync { .. })) => {
                    return Err(ExplorerError::Sim(e));
                }
                Err(ExplorerError::Sim(e)) => report.record_error(&e, ctx),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(report)
}
