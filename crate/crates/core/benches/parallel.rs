//! Sequential versus rayon execution of the data-parallel hot paths.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;

use tabbin::data::{Dataset, Labels, Split, Standardizer, Task};
use tabbin::nn::{Mlp, MlpSpec};
use tabbin::train::{linear_probe, ProbeConfig};
use tabbin::{Exec, Matrix};

fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = tabbin::rng::rng_from(seed);
    Matrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn matmul(c: &mut Criterion) {
    let a = random(512, 256, 1);
    let b = random(256, 256, 2);
    let mut g = c.benchmark_group("matmul_t_512x256x256");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| a.matmul_t_with(&b, exec).unwrap())
        });
    }
    g.finish();
}

fn binning(c: &mut Criterion) {
    let x = random(20_000, 32, 3);
    let mut g = c.benchmark_group("quantile_fit_20000x32");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| tabbin::binning::BinningSpec::fit(tabbin::binning::BinMethod::Quantile, 10, &x, exec).unwrap())
        });
    }
    g.finish();
}

fn probe_seeds(c: &mut Criterion) {
    let n = 1000;
    let x = random(n, 8, 4);
    let y: Vec<f64> = (0..n).map(|i| x[(i, 0)] - 0.5 * x[(i, 3)]).collect();
    let split = (0..n)
        .map(|i| match i % 5 {
            0 => Split::Val,
            1 => Split::Test,
            _ => Split::Train,
        })
        .collect();
    let names = (0..8).map(|j| format!("x{j}")).collect();
    let ds = Dataset::new(x, Labels::Values(y), Task::Regression, names)
        .unwrap()
        .with_split(split)
        .unwrap();
    let s = Standardizer::fit(&ds);
    let ds = s.apply(&ds).unwrap();
    let enc = Mlp::init(&MlpSpec::new(8, vec![64], 32).unwrap(), 5).unwrap();
    let cfg = ProbeConfig {
        epochs: 5,
        seeds: 8,
        ..ProbeConfig::linear()
    };
    let mut g = c.benchmark_group("linear_probe_8_seeds");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| linear_probe(&enc, &ds, &s, &cfg, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, matmul, binning, probe_seeds);
criterion_main!(benches);
