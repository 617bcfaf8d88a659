use affine_lpv::geometry::{convex_hull_3d, min_area_rectangle, min_volume_box3, mvee, MveeOptions};
use affine_lpv_bench::{cloud2, cloud3, cloud_d};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn rectangle(c: &mut Criterion) {
    let mut g = c.benchmark_group("min_area_rectangle");
    for n in [1_000, 10_000, 100_000] {
        let pts = cloud2(n, 7);
        g.bench_with_input(BenchmarkId::from_parameter(n), &pts, |b, p| {
            b.iter(|| min_area_rectangle(black_box(p)).unwrap())
        });
    }
    g.finish();
}

fn hull_and_box3(c: &mut Criterion) {
    let mut g = c.benchmark_group("box3");
    g.sample_size(10);
    for n in [1_000, 10_000] {
        let pts = cloud3(n, 11);
        g.bench_with_input(BenchmarkId::new("hull", n), &pts, |b, p| {
            b.iter(|| convex_hull_3d(black_box(p), 0).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("min_volume_box", n), &pts, |b, p| {
            b.iter(|| min_volume_box3(black_box(p), 0.05, 0).unwrap())
        });
    }
    g.finish();
}

fn ellipsoid(c: &mut Criterion) {
    let mut g = c.benchmark_group("mvee");
    g.sample_size(10);
    for d in [2, 4, 8] {
        let pts = cloud_d(d, 2_000, 3);
        g.bench_with_input(BenchmarkId::from_parameter(d), &pts, |b, p| {
            b.iter(|| mvee(black_box(p), &MveeOptions::default()).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, rectangle, hull_and_box3, ellipsoid);
criterion_main!(benches);
