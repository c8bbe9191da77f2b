use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use label_indeterminacy::classifier::{self, LinearModel};
use label_indeterminacy::experiment::{self, ExperimentConfig};
use label_indeterminacy::imputation::{self, FeaturizedCase, MethodId};
use label_indeterminacy::parallel::Strategy;
use label_indeterminacy::synthetic::{generate_world, WorldConfig};

const STRATEGIES: [(&str, Strategy); 2] = [("sequential", Strategy::Sequential), ("parallel", Strategy::Parallel)];

fn config() -> ExperimentConfig {
    ExperimentConfig {
        dimension: 512,
        ..Default::default()
    }
}

fn prepared() -> experiment::Prepared {
    let world = generate_world(&WorldConfig {
        population: 6000,
        selection_rate: 0.05,
        ..Default::default()
    })
    .unwrap();
    experiment::prepare(&world.records(), &config(), Strategy::default()).unwrap()
}

fn lookup<'a>(p: &'a experiment::Prepared, ids: &[String]) -> Vec<&'a FeaturizedCase> {
    ids.iter().map(|id| &p.data.cases[id]).collect()
}

fn kernels(c: &mut Criterion) {
    let p = prepared();
    let det = lookup(&p, &p.balanced_determinate[0].case_ids);
    let ind = lookup(&p, &p.balanced_indeterminate[0].case_ids);
    let instances = imputation::impute_corr(&ind, &det);
    let model = LinearModel::zeros(config().dimension);

    let mut group = c.benchmark_group("loss_gradient");
    for (name, strategy) in STRATEGIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| classifier::loss_gradient_with(&model, black_box(&instances), 1e-4, strategy).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("impute_nn");
    for (name, strategy) in STRATEGIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| imputation::impute_nn_with(black_box(&ind), &det, strategy).unwrap())
        });
    }
    group.finish();
}

fn grid(c: &mut Criterion) {
    let p = prepared();
    let cfg = ExperimentConfig {
        k: 3,
        methods: vec![MethodId::Corr, MethodId::Obs, MethodId::Nn, MethodId::ExpAvg],
        ..config()
    };
    let mut group = c.benchmark_group("train_grid");
    group.sample_size(10);
    for (name, strategy) in STRATEGIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| experiment::train_grid(black_box(&p), &cfg, strategy).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, kernels, grid);
criterion_main!(benches);
