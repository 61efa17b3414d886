//! Parallel against sequential throughput of the preparation stage.
//!
//! `cargo bench` measures the rayon path next to a plain iterator over the
//! same work. `cargo bench --no-default-features` builds the library's
//! sequential fallback, in which case both entries run in order.

use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use deflect_core::beamline::{prepare_beam, scan_preparation};
use deflect_core::config::RunConfig;
use deflect_core::par::{is_parallel, par_map};
use deflect_core::spin::PolarisationMode;

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.beamline.velocity_samples = 3;
    cfg
}

fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 * PI / n as f64).collect()
}

fn preparation(c: &mut Criterion) {
    let cfg = small_config();
    let structure = cfg.structure().unwrap();
    let thetas = grid(8);
    let label = if is_parallel() { "par_map" } else { "par_map (sequential build)" };

    let mut group = c.benchmark_group("prepare_beam");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new(label, thetas.len()), |b| {
        b.iter(|| par_map(&thetas, |&t| prepare_beam(&cfg, &structure, black_box(t)).unwrap()))
    });
    group.bench_function(BenchmarkId::new("iter", thetas.len()), |b| {
        b.iter(|| {
            thetas
                .iter()
                .map(|&t| prepare_beam(&cfg, &structure, black_box(t)).unwrap())
                .collect::<Vec<_>>()
        })
    });
    group.finish();
}

fn scan(c: &mut Criterion) {
    let cfg = small_config();
    let thetas = grid(4);
    let modes = [PolarisationMode::SigmaPlus, PolarisationMode::SigmaMinus];
    let label = if is_parallel() { "parallel" } else { "sequential" };

    let mut group = c.benchmark_group("scan_preparation");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new(label, thetas.len()), |b| {
        b.iter(|| scan_preparation(&cfg, &modes, black_box(&thetas)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, preparation, scan);
criterion_main!(benches);
