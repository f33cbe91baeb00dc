use criterion::{criterion_group, criterion_main, Criterion};

use twotier::harness::{run_sweep, run_sweep_sequential, SweepPlan};
use twotier::SimConfig;

fn plan() -> SweepPlan {
    SweepPlan {
        base: SimConfig { frames: 8, warmup_frames: 2, drain_frames: 8, ..Default::default() },
        ns: vec![64.0, 128.0],
        ap_scales: vec![1.0],
        seeds: vec![0, 1],
    }
}

fn sweep(c: &mut Criterion) {
    let plan = plan();
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    group.bench_function("parallel", |b| b.iter(|| run_sweep(&plan).unwrap()));
    group.bench_function("sequential", |b| b.iter(|| run_sweep_sequential(&plan).unwrap()));
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
