//! Seeded inputs shared by the benchmarks.

use affine_lpv::geometry::{P2, P3};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` points uniform in a sheared ellipse.
pub fn cloud2(n: usize, seed: u64) -> Vec<P2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let r: f64 = rng.gen_range(0.0..1.0f64).sqrt();
            let (x, y) = (3.0 * r * t.cos(), r * t.sin());
            [0.8 * x - 0.3 * y, 0.6 * x + 0.8 * y]
        })
        .collect()
}

/// `n` points in an anisotropic box, rotated off the axes.
pub fn cloud3(n: usize, seed: u64) -> Vec<P3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, s) = (0.5f64.cos(), 0.5f64.sin());
    (0..n)
        .map(|_| {
            let p: [f64; 3] = [rng.gen_range(-3.0..3.0), rng.gen_range(-1.5..1.5), rng.gen_range(-0.5..0.5)];
            [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2] + 0.2 * p[0]]
        })
        .collect()
}

/// `d x n` Gaussian-ish cloud with decaying axis scales.
pub fn cloud_d(d: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(d, n, |i, _| {
        let u: f64 = (0..4).map(|_| rng.gen_range(-1.0..1.0)).sum();
        u / (1.0 + i as f64)
    })
}
