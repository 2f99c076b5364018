//! Parallel vs sequential throughput of the hot paths.
//!
//! Each workload runs inside a one-thread pool and inside a pool with every
//! available core. Build with `--no-default-features` to measure the
//! sequential fallback, where both variants run the same code.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mdl_core::autodiff::{finite_diff_objective, init_params, MlpObjective};
use mdl_core::harness::{run_matrix, ExperimentConfig, RunData, Setup};
use mdl_core::trainer::{train, TrainConfig};
use rayon::ThreadPool;

fn pools() -> Vec<(String, ThreadPool)> {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut sizes = vec![1];
    if cores > 1 {
        sizes.push(cores);
    }
    sizes
        .into_iter()
        .map(|n| {
            let label = if mdl_core::parallel::ENABLED {
                format!("{n}-threads")
            } else {
                format!("sequential-{n}")
            };
            (label, rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap())
        })
        .collect()
}

fn desk_problem() -> (ExperimentConfig, MlpObjective, RunData) {
    let cfg = ExperimentConfig::desk();
    let objective = MlpObjective::new(cfg.model_spec(), cfg.loss_fn()).unwrap();
    let data = RunData::generate(&cfg, 0).unwrap();
    (cfg, objective, data)
}

fn meta_steps(c: &mut Criterion) {
    let (cfg, objective, data) = desk_problem();
    let objs = [objective.clone(), objective.clone()];
    let init = init_params(objective.spec(), 0).unwrap();
    let mut group = c.benchmark_group("train_50_steps");
    for (label, pool) in pools() {
        for setup in [Setup::F50T50, Setup::OursG25] {
            let tc = TrainConfig {
                steps: 50,
                ..cfg.train_config(setup, 0)
            };
            group.bench_with_input(BenchmarkId::new(setup.name(), &label), &tc, |b, tc| {
                b.iter(|| pool.install(|| train(tc, &objs, &data.train, init.clone()).unwrap()))
            });
        }
    }
    group.finish();
}

fn finite_differences(c: &mut Criterion) {
    let (_, objective, data) = desk_problem();
    let params = init_params(objective.spec(), 1).unwrap();
    let batch = data.train[0].subset(&[0, 1, 2, 3]).as_batch();
    let mut group = c.benchmark_group("finite_diff_grad");
    group.sample_size(10);
    for (label, pool) in pools() {
        group.bench_function(&label, |b| {
            b.iter(|| pool.install(|| finite_diff_objective(&objective, &params, &batch, 1e-5).unwrap()))
        });
    }
    group.finish();
}

fn small_matrix(c: &mut Criterion) {
    let mut cfg = ExperimentConfig::desk();
    cfg.repeats = 2;
    cfg.training.steps = 40;
    cfg.save_checkpoints = false;
    let mut group = c.benchmark_group("run_matrix_9x2x40");
    group.sample_size(10);
    for (label, pool) in pools() {
        group.bench_function(&label, |b| b.iter(|| pool.install(|| run_matrix(&cfg).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, meta_steps, finite_differences, small_matrix);
criterion_main!(benches);
