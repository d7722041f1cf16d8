use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use std::hint::black_box;
use trirng_bench::{toeplitz_fixture, BLOCK_M};
use trirng_core::gaussian::{normalize_pool, wallace_pass, RecursiveMatrix};
use trirng_core::source::{NoiseModel, QuadratureSource};
use trirng_core::uniform::{toeplitz_extract, ToeplitzKernel};

fn toeplitz(c: &mut Criterion) {
    let (seed, inputs) = toeplitz_fixture(64, 7);
    let kernel = ToeplitzKernel::new(seed.clone());
    let mut g = c.benchmark_group("toeplitz");
    g.throughput(Throughput::Elements(1));
    g.bench_function("fast", |b| {
        b.iter(|| kernel.extract(black_box(&inputs[0])).unwrap())
    });
    g.bench_function("naive", |b| {
        b.iter(|| toeplitz_extract(black_box(&inputs[0]), &seed, BLOCK_M).unwrap())
    });
    g.throughput(Throughput::Elements(inputs.len() as u64));
    g.bench_function("batch64", |b| {
        b.iter(|| kernel.extract_batch(black_box(&inputs)).unwrap())
    });
    g.finish();
}

fn gaussian(c: &mut Criterion) {
    let mut src = QuadratureSource::new(&NoiseModel::calibrated(), 3).unwrap();
    let frame = src.fill(1 << 16);
    let matrix = RecursiveMatrix::hadamard(4).unwrap();
    let mut g = c.benchmark_group("gaussian");
    g.throughput(Throughput::Elements(1 << 16));
    g.bench_function("pass_65536", |b| {
        b.iter_batched(
            || normalize_pool(frame.i_samples.clone(), 4).unwrap(),
            |pool| wallace_pass(&pool, &matrix).unwrap(),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

fn source(c: &mut Criterion) {
    let mut src = QuadratureSource::new(&NoiseModel::calibrated(), 5).unwrap();
    let mut i = vec![0.0; 1 << 14];
    let mut q = vec![0.0; 1 << 14];
    let mut g = c.benchmark_group("source");
    g.throughput(Throughput::Elements(1 << 14));
    g.bench_function("fill_16384", |b| {
        b.iter(|| src.fill_into(black_box(&mut i), black_box(&mut q)))
    });
    g.finish();
}

criterion_group!(benches, toeplitz, gaussian, source);
criterion_main!(benches);
