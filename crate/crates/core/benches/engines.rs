use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use caf_core::des::{simulate_with, SimConfig};
use caf_core::exec::Execution;
use caf_core::harness::config::{Engines, SweepSpec};
use caf_core::harness::sweep::run_sweep_with;
use caf_core::SystemParams;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn replications(c: &mut Criterion) {
    let mut cfg = SimConfig::new(SystemParams::reference(2.0, 4.0, 2.0));
    cfg.max_events = 100_000;
    cfg.warmup_events = 10_000;
    cfg.replications = 8;
    let mut group = c.benchmark_group("simulate_8x1e5");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| simulate_with(&cfg, mode).expect("valid config"))
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let mut spec = SweepSpec::reference();
    spec.engines = Engines::Both;
    spec.sim.set_events(20_000);
    spec.sim.replications = 2;
    let mut group = c.benchmark_group("sweep_reference");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| run_sweep_with(&spec, mode))
        });
    }
    group.finish();
}

criterion_group!(benches, replications, sweep);
criterion_main!(benches);
