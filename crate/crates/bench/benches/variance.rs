use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use uvar::hdvar::{tau2a_hat_fast, tau2a_hat_naive};
use uvar::{hd_variance, ij_bm_variance, BmPlugin, HdOptions, KernelContext};
use uvar_bench::frame;

fn tau2a(c: &mut Criterion) {
    let mut group = c.benchmark_group("tau2a");
    group.sample_size(10);
    for n in [50.0, 100.0, 200.0] {
        let (pop, probs, s) = frame(5_000, n, 1);
        let ctx = KernelContext::new(&pop, &probs, &s).unwrap();
        group.bench_with_input(BenchmarkId::new("fast", s.len()), &ctx, |b, ctx| {
            b.iter(|| tau2a_hat_fast(black_box(ctx)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("naive", s.len()), &ctx, |b, ctx| {
            b.iter(|| tau2a_hat_naive(black_box(ctx)).unwrap())
        });
    }
    group.finish();
}

fn full_report(c: &mut Criterion) {
    let mut group = c.benchmark_group("hd_variance");
    group.sample_size(10);
    for (n_pop, n) in [(2_000, 50.0), (40_000, 500.0)] {
        let (pop, probs, s) = frame(n_pop, n, 2);
        group.bench_function(BenchmarkId::from_parameter(format!("{n_pop}/{}", s.len())), |b| {
            b.iter(|| {
                let ctx = KernelContext::new(&pop, &probs, &s).unwrap();
                hd_variance(black_box(&ctx), HdOptions::default()).unwrap()
            })
        });
    }
    group.finish();
}

fn balanced_method(c: &mut Criterion) {
    let (pop, probs, s) = frame(40_000, 500.0, 3);
    let ctx = KernelContext::new(&pop, &probs, &s).unwrap();
    c.bench_function("ij_bm/40000", |b| b.iter(|| ij_bm_variance(black_box(&ctx), BmPlugin::default()).unwrap()));
}

criterion_group!(benches, tau2a, full_report, balanced_method);
criterion_main!(benches);
