use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI};

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use wavemaps::control::small_time_positive_check;
use wavemaps::obstruction::{nonuniform_decay_experiment, HomotopyFamily};
use wavemaps::solver::DampingProfile;
use wavemaps::{ControlRegion, ExecMode, Grid};

const MODES: [(&str, ExecMode); 2] = [
    ("sequential", ExecMode::Sequential),
    ("parallel", ExecMode::Parallel),
];

fn family_degree(c: &mut Criterion) {
    let mut group = c.benchmark_group("family_degree_a2_m64");
    group.sample_size(10);
    let family = HomotopyFamily::new(2).unwrap();
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| family.degree(64, mode).unwrap())
        });
    }
    group.finish();
}

fn decay_table(c: &mut Criterion) {
    let mut group = c.benchmark_group("nonuniform_decay_n128");
    group.sample_size(10);
    let grid = Grid::new(128).unwrap();
    let damping = DampingProfile::new(grid, ControlRegion::centered(0.75 * PI).unwrap(), 1.0).unwrap();
    let s = [FRAC_PI_8, FRAC_PI_4, 3.0 * FRAC_PI_8, FRAC_PI_2];
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| nonuniform_decay_experiment(&damping, &s, 0.1, 20.0, mode).unwrap())
        });
    }
    group.finish();
}

fn small_time_ensemble(c: &mut Criterion) {
    let mut group = c.benchmark_group("small_time_ensemble_n256");
    group.sample_size(10);
    let grid = Grid::new(256).unwrap();
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| small_time_positive_check(FRAC_PI_4, FRAC_PI_8, 16, 7, grid, mode).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, family_degree, decay_table, small_time_ensemble);
criterion_main!(benches);
