use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use vecagree_core::sim::{init_sim, run_to_completion, CrashSpec, FifoScheduler, RandomConfig, RandomScheduler};
use vecagree_core::{ProcessId, Value};

fn inputs() -> Vec<Value> {
    Value::parse_bits("11001").unwrap()
}

fn runs(c: &mut Criterion) {
    let inputs = inputs();
    c.bench_function("fifo_n5_no_crash", |b| {
        b.iter(|| {
            let mut sim = init_sim(5, &inputs, CrashSpec::none(), 0).unwrap().without_trace();
            run_to_completion(&mut sim, &mut FifoScheduler).unwrap()
        })
    });
    let mut seed = 0u64;
    c.bench_function("random_n5_crash_p3", |b| {
        b.iter_batched(
            || {
                seed += 1;
                RandomScheduler::new(RandomConfig::with_seed(seed), 5)
            },
            |mut sched| {
                let crash = CrashSpec::at(ProcessId::from_slot(2), 2);
                let mut sim = init_sim(5, &inputs, crash, 0).unwrap().without_trace();
                run_to_completion(&mut sim, &mut sched).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
    let seven = Value::parse_bits("1100101").unwrap();
    c.bench_function("random_n7_no_crash", |b| {
        b.iter_batched(
            || {
                seed += 1;
                RandomScheduler::new(RandomConfig::with_seed(seed), 7)
            },
            |mut sched| {
                let mut sim = init_sim(7, &seven, CrashSpec::none(), 0).unwrap().without_trace();
                run_to_completion(&mut sim, &mut sched).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, runs);
criterion_main!(benches);
