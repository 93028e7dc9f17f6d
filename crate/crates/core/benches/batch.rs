use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use magsteer::control::PolicySpec;
use magsteer::harness::{RunConfig, Tier};
use magsteer::sim::{run_batch, TrialSetup};

fn conditions() -> (Vec<TrialSetup>, Vec<u64>) {
    let cfg = RunConfig::default();
    let phantom = cfg.load_phantom().expect("default phantom");
    let policies = [PolicySpec::Fixed, PolicySpec::Discrete, PolicySpec::Context(Default::default())];
    let setups = policies
        .iter()
        .map(|p| cfg.setup(&phantom, Tier::Easy, p, 0).expect("setup"))
        .collect();
    (setups, (1..=4).collect())
}

fn batch(c: &mut Criterion) {
    let (setups, seeds) = conditions();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut group = c.benchmark_group("run_batch");
    group.sample_size(10);
    for (name, jobs) in [("sequential", 1), ("parallel", threads.max(2))] {
        group.bench_with_input(BenchmarkId::new(name, jobs), &jobs, |b, &jobs| {
            b.iter(|| {
                let out = run_batch(&setups, &seeds, jobs).expect("batch");
                assert!(out.iter().all(|e| e.result.is_ok()));
                out
            })
        });
    }
    group.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
