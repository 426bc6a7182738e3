//! Parallel against sequential execution of the three hot loops: kernel
//! tables, the ladder solve and a short crossed spectrum.
//!
//!     cargo bench -p nlcbs-core

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nlcbs_core::crossed::{crossed_spectrum, CrossedConfig};
use nlcbs_core::kernels::LadderTables;
use nlcbs_core::ladder::{solve_ladder, LadderConfig};
use nlcbs_core::{EnergyGrid, InteractionParams, Parallelism};

const MODES: [(&str, Parallelism); 2] = [
    ("parallel", Parallelism::Parallel),
    ("sequential", Parallelism::Sequential),
];

fn ladder_config(exec: Parallelism) -> LadderConfig {
    let p = InteractionParams::new(0.02, 0.2, 10.0).unwrap();
    let mut cfg = LadderConfig::new(p, 10.0).unwrap();
    cfg.energy = EnergyGrid::uniform(5.0, 60).unwrap();
    cfg.parallelism = exec;
    cfg
}

fn tables(c: &mut Criterion) {
    let grid = EnergyGrid::uniform(5.0, 60).unwrap();
    let p = InteractionParams::new(0.02, 0.2, 10.0).unwrap();
    let mut g = c.benchmark_group("ladder_tables");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| LadderTables::build(black_box(&grid), &p, exec).unwrap())
        });
    }
    g.finish();
}

fn ladder(c: &mut Criterion) {
    let mut g = c.benchmark_group("ladder_solve");
    g.sample_size(10);
    for (name, exec) in MODES {
        let cfg = ladder_config(exec);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| solve_ladder(black_box(&cfg)).unwrap())
        });
    }
    g.finish();
}

fn crossed(c: &mut Criterion) {
    let sol = solve_ladder(&ladder_config(Parallelism::Sequential)).unwrap();
    let template = CrossedConfig::new(1.0, 10.0);
    let s = template.spacing;
    let e_d: Vec<f64> = (-3..=4)
        .map(|j| if j == 0 { 1.0 } else { 1.0 + j as f64 * s })
        .collect();
    let mut g = c.benchmark_group("crossed_spectrum");
    g.sample_size(10);
    for (name, exec) in MODES {
        let t = CrossedConfig {
            parallelism: exec,
            ..template.clone()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| crossed_spectrum(black_box(&sol), &e_d, &t).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, tables, ladder, crossed);
criterion_main!(benches);
