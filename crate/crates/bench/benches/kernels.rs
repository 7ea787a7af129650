use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kmlp_bench::{blobs, layer};
use kmlp_core::KernelSpec;

fn gram(c: &mut Criterion) {
    let kernel = KernelSpec::gaussian(1.0).unwrap();
    let mut group = c.benchmark_group("gram");
    for n in [128, 512, 1024] {
        let ds = blobs(n, 32);
        group.bench_with_input(BenchmarkId::from_parameter(n), &ds, |b, ds| {
            b.iter(|| kernel.gram(ds.features.view(), ds.features.view()).unwrap());
        });
    }
    group.finish();
}

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("layer_forward");
    for n in [256, 1024] {
        let ds = blobs(n, 32);
        let l = layer(&ds, 50, 2.0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &ds, |b, ds| {
            b.iter(|| l.forward(ds.features.view()).unwrap());
        });
    }
    group.finish();
}

criterion_group!(benches, gram, forward);
criterion_main!(benches);
