use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gbc_core::engine::{optimize_utility_net, EuScheme, OptimizeOptions};
use gbc_core::models::{simulate_pairs_with, simulate_portfolio_table_with, NormalNormalModel, PortfolioProblem, RandomSource};
use gbc_core::net::{backward_with, DenseNet, Example, QuantileNet, Standardization, TrainConfig};
use gbc_core::ExecMode;
use std::hint::black_box;

const MODES: [ExecMode; 2] = [ExecMode::Sequential, ExecMode::Parallel];

fn simulation(c: &mut Criterion) {
    let model = NormalNormalModel::from_sds(0.0, 5.0, 10.0, 100).unwrap();
    let problem = PortfolioProblem::new(0.05, 0.1, 0.25, 2.0, (0.0, 1.0)).unwrap();
    let grid = problem.weight_grid(101);
    let rng = RandomSource::new(1);
    let mut g = c.benchmark_group("simulate");
    for mode in MODES {
        g.bench_with_input(BenchmarkId::new("normal_normal_20k", format!("{mode:?}")), &mode, |b, &m| {
            b.iter(|| simulate_pairs_with(&model, black_box(20_000), &rng, m).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("portfolio_101x200", format!("{mode:?}")), &mode, |b, &m| {
            b.iter(|| simulate_portfolio_table_with(&problem, &grid, black_box(200), &rng, m).unwrap())
        });
    }
    g.finish();
}

fn gradients(c: &mut Criterion) {
    let net = DenseNet::he_uniform(&[2, 64, 64, 64, 1], 3).unwrap();
    let mut r = RandomSource::new(4);
    let batch: Vec<Example> = (0..2048)
        .map(|_| Example::new(vec![r.normal(0.0, 1.0), r.uniform()], r.normal(0.0, 1.0), r.uniform()))
        .collect();
    let mut g = c.benchmark_group("backward");
    for mode in MODES {
        g.bench_with_input(BenchmarkId::new("3x64_batch2048", format!("{mode:?}")), &mode, |b, &m| {
            b.iter(|| backward_with(&net, black_box(&batch), m).unwrap())
        });
    }
    g.finish();
}

fn eu_sweep(c: &mut Criterion) {
    let net = QuantileNet {
        net: DenseNet::he_uniform(&[2, 64, 64, 64, 1], 5).unwrap(),
        standardization: Standardization::identity(2),
        seed: 5,
        config: TrainConfig::default(),
    };
    let mut g = c.benchmark_group("eu_grid_sweep");
    g.sample_size(20);
    for mode in MODES {
        let opts = OptimizeOptions {
            refine: false,
            exec: mode,
            ..OptimizeOptions::default()
        };
        g.bench_with_input(BenchmarkId::new("grid101_m1024", format!("{mode:?}")), &opts, |b, o| {
            b.iter(|| optimize_utility_net(&net, (0.0, 1.0), 1024, EuScheme::UniformGrid, 0, o).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, simulation, gradients, eu_sweep);
criterion_main!(benches);
