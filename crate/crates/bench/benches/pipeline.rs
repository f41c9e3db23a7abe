use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use spheroest::qle::{compute_statistics, estimate_moments, Intensity, SectionSimulator};
use spheroest::rng::rng_from_seed;
use spheroest::unfold::{bin_ellipses, em_unfold, estimate_column, estimate_kernel, BinningSpec, EmConfig, KernelConfig, SourceBox};
use spheroest::ModelParams;

fn setting() -> ModelParams {
    ModelParams::new(-2.15, 0.55, 0.35, 0.3, 0.0, 1.0).unwrap()
}

fn simulate_and_section(c: &mut Criterion) {
    let sim = SectionSimulator::square(Intensity::Fixed(50.0), 10.0);
    let theta = setting();
    let mut seed = 0;
    c.bench_function("simulate and section, plate 10", |b| {
        b.iter(|| {
            seed += 1;
            black_box(sim.sections(&theta, seed).unwrap())
        })
    });
    let ellipses = sim.sections(&theta, 1).unwrap();
    c.bench_function("summary statistics", |b| b.iter(|| black_box(compute_statistics(&ellipses).unwrap())));
}

fn kernel(c: &mut Criterion) {
    let binning = BinningSpec::preset(2, 1.0).unwrap();
    let src = SourceBox::of_class(&binning, binning.index(4, 2, 3));
    c.bench_function("kernel column, 10^4 draws", |b| {
        let mut rng = rng_from_seed(3);
        b.iter(|| black_box(estimate_column(&src, &binning, 10_000, &mut rng)))
    });
}

fn unfolding(c: &mut Criterion) {
    let sim = SectionSimulator::square(Intensity::Fixed(50.0), 10.0);
    let ellipses = sim.sections(&setting(), 2).unwrap();
    let c_max = 1.25 * ellipses.iter().map(|e| e.minor).fold(0.0, f64::max);
    let binning = BinningSpec::preset(2, c_max).unwrap();
    let kernel = estimate_kernel(&binning.with_c_max(1.0), &KernelConfig::default())
        .unwrap()
        .rescaled(c_max);
    let g = bin_ellipses(&ellipses, &binning).unwrap();
    c.bench_function("EM unfolding, preset 2", |b| {
        b.iter(|| black_box(em_unfold(&g, &kernel, &EmConfig::default()).unwrap()))
    });
}

fn moments(c: &mut Criterion) {
    let sim = SectionSimulator::square(Intensity::Fixed(50.0), 10.0);
    let theta = setting();
    let mut group = c.benchmark_group("quasi-likelihood");
    group.sample_size(10);
    group.bench_function("moments from 20 simulations", |b| {
        b.iter(|| black_box(estimate_moments(&sim, &theta, 20, 4).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, simulate_and_section, kernel, unfolding, moments);
criterion_main!(benches);
