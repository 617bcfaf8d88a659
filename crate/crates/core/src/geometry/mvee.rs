//! Minimum-volume enclosing ellipsoid by Khachiyan's dual-weight iteration
//! with Todd–Yildirim away steps.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{Ellipsoid, GeometryError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MveeOptions {
    /// Stop once both the add and the away gap fall below this value.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for MveeOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-7,
            max_iterations: 1_000_000,
        }
    }
}

const REFRESH_EVERY: usize = 200;

/// Recompute `X^{-1}` and all `M_i = q_i^T X^{-1} q_i` from the weights.
fn refresh(q: &DMatrix<f64>, u: &[f64]) -> Option<(DMatrix<f64>, Vec<f64>)> {
    let m = q.nrows();
    let mut x = DMatrix::zeros(m, m);
    for (i, col) in q.column_iter().enumerate() {
        if u[i] > 0.0 {
            x.ger(u[i], &col, &col, 1.0);
        }
    }
    let xi = x.try_inverse()?;
    let mvals = q
        .column_iter()
        .map(|c| (c.transpose() * &xi * c)[(0, 0)])
        .collect();
    Some((xi, mvals))
}

/// Smallest ellipsoid containing the columns of `points` (`d x N`, `d >= 1`).
///
/// The shape is rescaled at the end so the largest constraint value over the
/// input is exactly 1.
pub fn mvee(points: &DMatrix<f64>, opts: &MveeOptions) -> Result<Ellipsoid, GeometryError> {
    let (d, n) = points.shape();
    if n == 0 || d == 0 {
        return Err(GeometryError::Empty);
    }
    // Affine rank check on the centered cloud.
    let mean = points.column_mean();
    let centered = DMatrix::from_fn(d, n, |r, c| points[(r, c)] - mean[r]);
    let cov = &centered * centered.transpose();
    let eig = SymmetricEigen::new(cov.clone());
    let lmax = eig.eigenvalues.max();
    let rank = eig.eigenvalues.iter().filter(|&&l| l > 1e-12 * lmax.max(0.0)).count();
    if !(lmax > 0.0) || rank < d {
        return Err(GeometryError::Degenerate {
            dim: if lmax > 0.0 { rank } else { 0 },
        });
    }

    // Work on centered, scaled coordinates for conditioning.
    let scale = lmax.sqrt() / (n as f64).sqrt();
    let m = d + 1;
    let mf = m as f64;
    let q = DMatrix::from_fn(m, n, |r, c| if r < d { centered[(r, c)] / scale } else { 1.0 });

    let mut u = vec![1.0 / n as f64; n];
    let (mut xi, mut mv) = refresh(&q, &u).ok_or(GeometryError::Degenerate { dim: rank })?;
    let mut iter = 0usize;
    let mut gap = f64::INFINITY;
    while iter < opts.max_iterations {
        let j = (0..n).max_by(|&a, &b| mv[a].total_cmp(&mv[b])).unwrap();
        let k = (0..n)
            .filter(|&i| u[i] > 0.0)
            .min_by(|&a, &b| mv[a].total_cmp(&mv[b]))
            .unwrap();
        let eps_plus = mv[j] / mf - 1.0;
        let eps_minus = 1.0 - mv[k] / mf;
        gap = eps_plus.max(eps_minus);
        if gap <= opts.tolerance {
            break;
        }
        // Signed step on vertex `t`: X <- (1 - beta) X + beta q_t q_t^T.
        let (t, beta) = if eps_plus >= eps_minus {
            (j, (mv[j] - mf) / (mf * (mv[j] - 1.0)))
        } else {
            let b = ((mf - mv[k]) / (mf * (mv[k] - 1.0))).min(u[k] / (1.0 - u[k]));
            (k, -b)
        };
        for w in u.iter_mut() {
            *w *= 1.0 - beta;
        }
        u[t] += beta;
        if u[t] < 1e-300 {
            u[t] = 0.0;
        }
        iter += 1;
        if iter % REFRESH_EVERY == 0 {
            let (a, b) = refresh(&q, &u).ok_or(GeometryError::Degenerate { dim: rank })?;
            xi = a;
            mv = b;
            continue;
        }
        let qt = q.column(t);
        let w = &xi * qt;
        let denom = (1.0 - beta) + beta * mv[t];
        let inv = 1.0 / (1.0 - beta);
        let c = beta / denom;
        for (i, col) in q.column_iter().enumerate() {
            let s = col.dot(&w);
            mv[i] = inv * (mv[i] - c * s * s);
        }
        xi.ger(-c, &w, &w, 1.0);
        xi *= inv;
    }
    if gap > opts.tolerance {
        return Err(GeometryError::NonConvergence {
            iterations: iter,
            residual: gap,
        });
    }
    log::debug!("mvee converged in {iter} iterations (gap {gap:.2e})");

    // Center and shape in scaled coordinates.
    let mut c = DVector::zeros(d);
    for (i, col) in q.column_iter().enumerate() {
        c += col.rows(0, d) * u[i];
    }
    let mut s = DMatrix::zeros(d, d);
    for (i, col) in q.column_iter().enumerate() {
        if u[i] > 0.0 {
            let v = col.rows(0, d) - &c;
            s.ger(u[i], &v, &v, 1.0);
        }
    }
    let shape_scaled = s
        .try_inverse()
        .ok_or(GeometryError::Degenerate { dim: rank })?
        / d as f64;
    let center = &c * scale + &mean;
    let mut shape = shape_scaled / (scale * scale);
    shape = (&shape + shape.transpose()) * 0.5;
    let mut ell = Ellipsoid { shape, center };
    let gmax = points
        .column_iter()
        .map(|p| ell.constraint(&p.into_owned()))
        .fold(0.0f64, f64::max);
    if gmax > 0.0 {
        ell.shape /= gmax;
    }
    Ok(ell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cross_polytope_gives_unit_ball() {
        let mut pts = DMatrix::zeros(4, 8);
        for i in 0..4 {
            pts[(i, 2 * i)] = 1.0;
            pts[(i, 2 * i + 1)] = -1.0;
        }
        let e = mvee(&pts, &MveeOptions::default()).unwrap();
        assert!((e.shape.clone() - DMatrix::identity(4, 4)).amax() < 1e-4);
        assert!(e.center.amax() < 1e-4);
    }

    #[test]
    fn sphere_points_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = 2.5;
        let pts = DMatrix::from_fn(3, 200, |_, _| rng.gen_range(-1.0..1.0));
        let pts = DMatrix::from_fn(3, 200, |i, k| r * pts[(i, k)] / pts.column(k).norm());
        let e = mvee(&pts, &MveeOptions::default()).unwrap();
        let expect = DMatrix::identity(3, 3) / (r * r);
        assert!((e.shape - expect).amax() < 2e-3);
    }

    #[test]
    fn degenerate_inputs() {
        let two = DMatrix::from_column_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(
            mvee(&two, &MveeOptions::default()),
            Err(GeometryError::Degenerate { dim: 0 })
        );
        let line = DMatrix::from_fn(2, 5, |i, k| (i + 1) as f64 * k as f64);
        assert_eq!(
            mvee(&line, &MveeOptions::default()),
            Err(GeometryError::Degenerate { dim: 1 })
        );
    }

    #[test]
    fn feasibility_band_on_random_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let opts = MveeOptions::default();
        for _ in 0..10 {
            let d = rng.gen_range(2..6);
            let n = rng.gen_range(d + 2..120);
            let pts = DMatrix::from_fn(d, n, |i, _| (i + 1) as f64 * rng.gen_range(-1.0..1.0));
            let e = mvee(&pts, &opts).unwrap();
            let g = pts
                .column_iter()
                .map(|p| e.constraint(&p.into_owned()))
                .fold(0.0f64, f64::max);
            assert!(g <= 1.0 + opts.tolerance && g >= 1.0 - 10.0 * opts.tolerance);
        }
    }

    #[test]
    fn iteration_cap_reports_progress() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts = DMatrix::from_fn(3, 50, |_, _| rng.gen_range(-1.0..1.0));
        let r = mvee(
            &pts,
            &MveeOptions {
                tolerance: 1e-12,
                max_iterations: 3,
            },
        );
        assert!(matches!(r, Err(GeometryError::NonConvergence { iterations: 3, .. })));
    }
}
