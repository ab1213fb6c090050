//! Each property check must fire on a minimally corrupted copy of a clean run.

use vecagree_core::explorer::{check_binary_lift, check_properties, Property, PropertyReport};
use vecagree_core::sim::{init_sim, run_to_completion, CrashSpec, FifoScheduler, RunResult};
use vecagree_core::{Completion, CompletionRule, ProcessId, Value, ValueVector};

fn inputs() -> Vec<Value> {
    Value::parse_bits("11001").unwrap()
}

fn clean(crash: CrashSpec) -> RunResult {
    let mut sim = init_sim(5, &inputs(), crash, 0).unwrap();
    let r = run_to_completion(&mut sim, &mut FifoScheduler).unwrap();
    assert!(check_properties(&r, &inputs()).is_empty());
    r
}

fn fired(r: &RunResult) -> Vec<Property> {
    let mut out: Vec<_> = check_properties(r, &inputs()).into_iter().map(|v| v.property).collect();
    out.dedup();
    out
}

fn p(i: usize) -> ProcessId {
    ProcessId::from_slot(i - 1)
}

#[test]
fn agreement_catches_a_differing_decision() {
    let mut r = clean(CrashSpec::none());
    let mut d = r.decisions[1].clone().unwrap();
    let slot = d.first_empty().unwrap_or(p(1));
    let other = if slot == p(1) { p(2) } else { p(1) };
    d = ValueVector::from_slots(
        d.slots().iter().enumerate().map(|(i, s)| if i == other.slot() { None } else { s.clone() }).collect(),
    );
    r.decisions[1] = Some(d);
    assert!(fired(&r).contains(&Property::Agreement));
}

#[test]
fn validity_catches_a_foreign_value() {
    let mut r = clean(CrashSpec::none());
    for d in r.decisions.iter_mut().flatten() {
        let mut slots = d.slots().to_vec();
        let i = slots.iter().position(Option::is_some).unwrap();
        slots[i] = Some(Value::new("7").unwrap());
        *d = ValueVector::from_slots(slots);
    }
    assert_eq!(fired(&r), vec![Property::Validity]);
}

#[test]
fn validity_catches_two_empty_slots() {
    let mut r = clean(CrashSpec::none());
    let two_empty = ValueVector::from_slots(vec![
        None,
        None,
        Some(Value::bit(false)),
        Some(Value::bit(false)),
        Some(Value::bit(true)),
    ]);
    for d in r.decisions.iter_mut() {
        *d = Some(two_empty.clone());
    }
    assert_eq!(fired(&r), vec![Property::Validity]);
}

#[test]
fn termination_catches_a_silent_correct_process() {
    let mut r = clean(CrashSpec::none());
    r.decisions[3] = None;
    assert_eq!(fired(&r), vec![Property::Termination]);
}

#[test]
fn termination_ignores_the_crashed_process() {
    let r = clean(CrashSpec::at(p(2), 0));
    assert!(r.decisions[1].is_none());
    assert!(fired(&r).is_empty());
}

fn one_empty(missing: ProcessId) -> ValueVector {
    let mut v = ValueVector::full(&inputs());
    v = ValueVector::from_slots(
        v.slots().iter().enumerate().map(|(i, s)| if i == missing.slot() { None } else { s.clone() }).collect(),
    );
    v
}

#[test]
fn common_empty_slot_catches_different_missing_slots() {
    let mut r = clean(CrashSpec::none());
    for (i, c) in r.completions.iter_mut().enumerate() {
        let missing = if i == 0 { p(2) } else { p(1) };
        *c = Some(Completion { rule: CompletionRule::EqualFirst, vector: one_empty(missing) });
    }
    assert!(fired(&r).contains(&Property::CommonEmptySlot));
}

#[test]
fn full_entrant_count_catches_a_single_full_entrant() {
    let mut r = clean(CrashSpec::none());
    for (i, c) in r.completions.iter_mut().enumerate() {
        let vector = if i == 0 { ValueVector::full(&inputs()) } else { one_empty(p(5)) };
        *c = Some(Completion { rule: CompletionRule::EqualFirst, vector });
    }
    assert_eq!(fired(&r), vec![Property::FullEntrantCount]);
}

#[test]
fn anomalies_surface_as_runtime_violations() {
    let mut r = clean(CrashSpec::none());
    r.anomalies.push("phase went backwards".into());
    assert_eq!(fired(&r), vec![Property::RuntimeInvariant]);
}

#[test]
fn binary_lift_catches_split_bits() {
    let mut r = clean(CrashSpec::none());
    assert_eq!(check_binary_lift(&r), Some(None));
    r.decisions[0] = Some(ValueVector::from_slots(vec![
        Some(Value::bit(false)),
        Some(Value::bit(false)),
        Some(Value::bit(false)),
        Some(Value::bit(false)),
        None,
    ]));
    let v = check_binary_lift(&r).unwrap().unwrap();
    assert_eq!(v.property, Property::BinaryLift);

    r.inputs[0] = Value::new("x").unwrap();
    assert_eq!(check_binary_lift(&r), None);
}

#[test]
fn report_counts_every_violation() {
    let mut r = clean(CrashSpec::none());
    r.decisions[2] = None;
    let mut report = PropertyReport::default();
    for _ in 0..100 {
        report.record_run(&r, &inputs(), None);
    }
    assert_eq!(report.count(Property::Termination), 100);
    assert!(report.violations.len() <= vecagree_core::explorer::MAX_RECORDED_VIOLATIONS);
    assert!(!report.is_clean());
}

#[test]
fn report_merge_is_associative() {
    let base = clean(CrashSpec::none());
    let mut bad = base.clone();
    bad.decisions[0] = None;
    let mk = |runs: &[&RunResult]| {
        let mut rep = PropertyReport::default();
        for r in runs {
            rep.record_run(r, &inputs(), None);
        }
        rep
    };
    let (a, b, c) = (mk(&[&base]), mk(&[&bad, &base]), mk(&[&bad]));
    let mut left = a.clone();
    left.merge(b.clone());
    left.merge(c.clone());
    let mut bc = b;
    bc.merge(c);
    let mut right = a;
    right.merge(bc);
    assert_eq!(left, right);
}
