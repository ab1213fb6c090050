use proptest::prelude::*;
use vecagree_core::explorer::{check_properties, random_campaign, CampaignConfig, CrashMode};
use vecagree_core::sim::{
    init_sim, read_trace_jsonl, replay, replay_with_gate, run_to_completion, write_trace_jsonl, CrashSpec,
    FifoScheduler, RandomConfig, RandomScheduler, RunResult, Sim, SimError, TraceRecord,
};
use vecagree_core::{BlendGate, ProcessId, Value};

fn inputs() -> Vec<Value> {
    Value::parse_bits("11001").unwrap()
}

fn random_run(
    n: usize,
    inputs: &[Value],
    crash: CrashSpec,
    seed: u64,
    gate: BlendGate,
) -> (RunResult, Vec<TraceRecord>) {
    let mut sim = Sim::with_gate(n, inputs, crash, 0, gate).unwrap();
    let mut cfg = RandomConfig::with_seed(seed);
    cfg.link_skew = (seed % 2 == 0).then_some(20.0);
    let mut sched = RandomScheduler::new(cfg, n);
    let r = run_to_completion(&mut sim, &mut sched).unwrap();
    (r, sim.trace().iter().map(TraceRecord::from).collect())
}

#[test]
fn fifo_run_decides_everywhere() {
    let mut sim = init_sim(5, &inputs(), CrashSpec::none(), 0).unwrap();
    let r = run_to_completion(&mut sim, &mut FifoScheduler).unwrap();
    assert!(r.decisions.iter().all(Option::is_some));
    assert_eq!(r.undelivered, 0);
    assert_eq!(r.delivered, r.sent);
    assert!(check_properties(&r, &inputs()).is_empty());
}

#[test]
fn crash_before_any_step_leaves_four_deciders() {
    let crash = CrashSpec::at(ProcessId::from_slot(4), 0);
    let mut sim = init_sim(5, &inputs(), crash, 0).unwrap();
    let r = run_to_completion(&mut sim, &mut FifoScheduler).unwrap();
    assert_eq!(r.crashed, Some(ProcessId::from_slot(4)));
    assert!(r.decisions[4].is_none());
    let d = r.decisions[0].as_ref().unwrap();
    assert_eq!(d.first_empty(), Some(ProcessId::from_slot(4)));
    assert!(check_properties(&r, &inputs()).is_empty());
}

#[test]
fn input_count_and_crash_list_errors() {
    assert!(matches!(init_sim(5, &inputs()[..4], CrashSpec::none(), 0), Err(SimError::InputCount { .. })));
    let two = [(ProcessId::from_slot(0), 1), (ProcessId::from_slot(1), 1)];
    assert!(matches!(CrashSpec::from_list(&two), Err(SimError::MultipleCrashes(2))));
    assert_eq!(CrashSpec::from_list(&[]).unwrap(), CrashSpec::none());
}

#[test]
fn crash_spec_round_trips_through_text() {
    for s in ["none", "P1@0", "P5@4"] {
        let c: CrashSpec = s.parse().unwrap();
        assert_eq!(c.to_string(), s);
    }
    assert_eq!("3@2".parse::<CrashSpec>().unwrap(), CrashSpec::at(ProcessId::from_slot(2), 2));
    for bad in ["", "P0@1", "P1", "P1@x", "Q1@1"] {
        assert!(bad.parse::<CrashSpec>().is_err(), "{bad}");
    }
}

#[test]
fn trace_jsonl_round_trip() {
    let mut sim = init_sim(5, &inputs(), CrashSpec::at(ProcessId::from_slot(0), 2), 0).unwrap();
    let mut sched = RandomScheduler::new(RandomConfig::with_seed(5), 5);
    let r = run_to_completion(&mut sim, &mut sched).unwrap();
    let mut buf = Vec::new();
    write_trace_jsonl(sim.trace(), &mut buf).unwrap();
    let records = read_trace_jsonl(&buf[..]).unwrap();
    assert_eq!(records.len(), sim.trace().len());
    let again = replay(5, &inputs(), r.crash, 0, &records).unwrap();
    assert_eq!(again, r);
}

#[test]
fn tampered_trace_is_rejected() {
    let (_, mut records) = random_run(5, &inputs(), CrashSpec::none(), 9, BlendGate::default());
    let i = records.iter().position(|r| r.payload_digest.is_some()).unwrap();
    records[i].payload_digest = Some("00".repeat(32));
    assert!(matches!(replay(5, &inputs(), CrashSpec::none(), 0, &records), Err(SimError::NoSuchMessage(_))));
}

#[test]
fn tracing_does_not_change_the_digest() {
    let crash = CrashSpec::at(ProcessId::from_slot(3), 3);
    let run = |trace: bool| {
        let mut sim = init_sim(5, &inputs(), crash, 0).unwrap();
        if !trace {
            sim = sim.without_trace();
        }
        let mut sched = RandomScheduler::new(RandomConfig::with_seed(77), 5);
        run_to_completion(&mut sim, &mut sched).unwrap().digest
    };
    assert_eq!(run(true), run(false));
}

fn gates() -> impl Strategy<Value = BlendGate> {
    prop_oneof![Just(BlendGate::OriginatorQuorum), Just(BlendGate::SenderQuorum), Just(BlendGate::Ungated)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn replay_reproduces_digest(seed: u64, who in 0usize..5, point in 0u32..5, crash: bool, gate in gates()) {
        let c = if crash { CrashSpec::at(ProcessId::from_slot(who), point) } else { CrashSpec::none() };
        let (r, records) = random_run(5, &inputs(), c, seed, gate);
        let again = replay_with_gate(5, &inputs(), c, 0, gate, &records).unwrap();
        prop_assert_eq!(&again.digest, &r.digest);
        prop_assert_eq!(again.decisions, r.decisions);
        let (r2, _) = random_run(5, &inputs(), c, seed, gate);
        prop_assert_eq!(r2.digest, r.digest);
    }

    #[test]
    fn random_runs_satisfy_properties(seed: u64, n in 5usize..8, who in 0usize..7, point in 0u32..5, crash: bool) {
        let ins: Vec<Value> = (0..n).map(|i| Value::bit((seed >> i) & 1 == 1)).collect();
        let c = if crash { CrashSpec::at(ProcessId::from_slot(who % n), point) } else { CrashSpec::none() };
        let (r, _) = random_run(n, &ins, c, seed, BlendGate::default());
        let v = check_properties(&r, &ins);
        prop_assert!(v.is_empty(), "{:?}", v);
    }
}

#[test]
fn campaign_independent_of_thread_count() {
    let mut cfg = CampaignConfig::new(5, inputs(), 2000, CrashMode::Random, 42);
    cfg.capture_traces = 1;
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| random_campaign(&cfg).unwrap());
    let b = four.install(|| random_campaign(&cfg).unwrap());
    assert_eq!(a, b);
    assert_eq!(a.runs, 2000);
}
