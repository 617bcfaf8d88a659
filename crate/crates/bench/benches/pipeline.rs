use affine_lpv::{accuracy_sweep, build_series, embed, fixture, EmbedOptions};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn fixtures(c: &mut Criterion) {
    for name in ["example1", "example2"] {
        let f = fixture(name).unwrap();
        let data = f.dataset().unwrap();
        let opts = EmbedOptions::for_fixture(&f);
        c.bench_function(&format!("{name}/build_series"), |b| {
            b.iter(|| build_series(black_box(&f.system), black_box(&data)).unwrap())
        });
        c.bench_function(&format!("{name}/embed"), |b| {
            b.iter(|| embed(black_box(&f.system), black_box(&data), &opts).unwrap())
        });
    }
    let f = fixture("example1").unwrap();
    let data = f.dataset().unwrap();
    let opts = EmbedOptions::for_fixture(&f);
    c.bench_function("example1/accuracy_sweep_1_6", |b| {
        b.iter(|| accuracy_sweep(&f.system, black_box(&data), 1..=6, &opts).unwrap())
    });
}

criterion_group!(benches, fixtures);
criterion_main!(benches);
