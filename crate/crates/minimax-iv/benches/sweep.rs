//! Compares the parallel and sequential execution modes of the rate
//! sweep on a mid-sized workload.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use minimax_iv::harness::{
    run_rate_sweep_with, EstimatorSpec, FamilySpec, ModeFlags, RunConfig, ScenarioSource,
    Tolerances,
};
use minimax_iv::npivop::JointDesign;
use minimax_iv::probspace::SpaceFun;
use minimax_iv::scenario::{attach_truth, NoiseSpec};

fn bench_config(reps: usize) -> RunConfig {
    let design = JointDesign::from_indexed_table(vec![
        vec![0.2, 0.1],
        vec![0.1, 0.2],
        vec![0.2, 0.2],
    ])
    .unwrap();
    let scenario = attach_truth(
        design,
        SpaceFun::new(vec![1.0, 2.0, 3.0]),
        NoiseSpec::Uniform { half_width: 0.5 },
    )
    .unwrap();
    RunConfig {
        scenario: ScenarioSource::Inline { scenario: Box::new(scenario) },
        estimators: vec![
            EstimatorSpec::named("penalized_minimax"),
            EstimatorSpec::named("dikkala"),
            EstimatorSpec::named("both_worlds"),
        ],
        n_grid: vec![256, 512, 1024],
        reps,
        master_seed: 17,
        out_dir: None,
        families: FamilySpec::default(),
        mode: ModeFlags::default(),
        tolerances: Tolerances::default(),
    }
}

fn sweep_modes(c: &mut Criterion) {
    let mut group = c.benchmark_group("rate_sweep");
    group.sample_size(10);
    for reps in [8usize, 24] {
        let config = bench_config(reps);
        group.bench_with_input(BenchmarkId::new("sequential", reps), &config, |b, cfg| {
            b.iter(|| run_rate_sweep_with(cfg, false).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("parallel", reps), &config, |b, cfg| {
            b.iter(|| run_rate_sweep_with(cfg, true).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep_modes);
criterion_main!(benches);
