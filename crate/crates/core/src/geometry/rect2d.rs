//! Minimum-area enclosing rectangle by rotating calipers.

use nalgebra::{DMatrix, DVector};

use super::hull::{convex_hull_2d, P2};
use super::{GeometryError, OrientedBox};

fn dot(a: P2, b: P2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Edge-aligned rectangle: direction, normal and projection ranges.
struct Caliper {
    e: P2,
    n: P2,
    e_lo: f64,
    e_hi: f64,
    n_lo: f64,
    n_hi: f64,
}

impl Caliper {
    fn area(&self) -> f64 {
        (self.e_hi - self.e_lo) * (self.n_hi - self.n_lo)
    }

    /// Rotation angle of the edge direction folded into (-pi/4, pi/4].
    fn folded_angle(&self) -> f64 {
        let q = std::f64::consts::FRAC_PI_2;
        let a = self.e[1].atan2(self.e[0]);
        let mut f = a - q * (a / q).round();
        if f <= -q / 2.0 {
            f += q;
        }
        f
    }
}

fn edge_frame(v: &[P2], i: usize) -> (P2, P2) {
    let a = v[i];
    let b = v[(i + 1) % v.len()];
    let d = [b[0] - a[0], b[1] - a[1]];
    let len = dot(d, d).sqrt();
    let e = [d[0] / len, d[1] / len];
    (e, [-e[1], e[0]])
}

/// Areas of the rectangles aligned with each hull edge, by direct projection.
/// The minimum of this list is what the caliper sweep must reproduce.
pub fn edge_aligned_areas(points: &[P2]) -> Result<Vec<f64>, GeometryError> {
    let h = convex_hull_2d(points)?;
    let v = &h.vertices;
    Ok((0..v.len())
        .map(|i| {
            let (e, n) = edge_frame(v, i);
            let pe: Vec<f64> = v.iter().map(|p| dot(*p, e)).collect();
            let pn: Vec<f64> = v.iter().map(|p| dot(*p, n)).collect();
            let span = |x: &[f64]| {
                x.iter().copied().fold(f64::NEG_INFINITY, f64::max) - x.iter().copied().fold(f64::INFINITY, f64::min)
            };
            span(&pe) * span(&pn)
        })
        .collect())
}

/// Exact minimum-area rectangle. One side is flush with a hull edge; among
/// equal-area candidates the one with the smallest rotation from the axes wins.
pub fn min_area_rectangle(points: &[P2]) -> Result<OrientedBox, GeometryError> {
    let hull = convex_hull_2d(points)?;
    let v = &hull.vertices;
    let h = v.len();
    let next = |k: usize| (k + 1) % h;

    // Initial extreme vertices for edge 0.
    let (e0, n0) = edge_frame(v, 0);
    let argmax = |f: &dyn Fn(P2) -> f64| (0..h).max_by(|&a, &b| f(v[a]).total_cmp(&f(v[b]))).unwrap();
    let mut right = argmax(&|p| dot(p, e0));
    let mut top = argmax(&|p| dot(p, n0));
    let mut left = argmax(&|p| -dot(p, e0));

    let mut best: Option<Caliper> = None;
    for i in 0..h {
        let (e, n) = edge_frame(v, i);
        // Each support only ever moves forward around the polygon.
        for _ in 0..h {
            if dot(v[next(right)], e) > dot(v[right], e) {
                right = next(right);
            } else {
                break;
            }
        }
        for _ in 0..h {
            if dot(v[next(top)], n) > dot(v[top], n) {
                top = next(top);
            } else {
                break;
            }
        }
        for _ in 0..h {
            if dot(v[next(left)], e) < dot(v[left], e) {
                left = next(left);
            } else {
                break;
            }
        }
        let c = Caliper {
            e,
            n,
            e_lo: dot(v[left], e),
            e_hi: dot(v[right], e),
            n_lo: dot(v[i], n),
            n_hi: dot(v[top], n),
        };
        let better = match &best {
            None => true,
            Some(b) => {
                let (a, ab) = (c.area(), b.area());
                let tol = 1e-12 * ab.abs().max(f64::MIN_POSITIVE);
                a < ab - tol || ((a - ab).abs() <= tol && c.folded_angle().abs() < b.folded_angle().abs())
            }
        };
        if better {
            best = Some(c);
        }
    }
    let c = best.expect("hull has at least three edges");
    // Extents are recomputed from every input point so containment is exact
    // for points the hull dropped as collinear.
    let (mut e_lo, mut e_hi, mut n_lo, mut n_hi) = (c.e_lo, c.e_hi, c.n_lo, c.n_hi);
    for p in points {
        let (pe, pn) = (dot(*p, c.e), dot(*p, c.n));
        e_lo = e_lo.min(pe);
        e_hi = e_hi.max(pe);
        n_lo = n_lo.min(pn);
        n_hi = n_hi.max(pn);
    }
    let me = 0.5 * (e_lo + e_hi);
    let mn = 0.5 * (n_lo + n_hi);
    let mut bx = OrientedBox {
        center: DVector::from_vec(vec![me * c.e[0] + mn * c.n[0], me * c.e[1] + mn * c.n[1]]),
        rotation: DMatrix::from_column_slice(2, 2, &[c.e[0], c.e[1], c.n[0], c.n[1]]),
        half_extents: DVector::from_vec(vec![0.5 * (e_hi - e_lo), 0.5 * (n_hi - n_lo)]),
    };
    bx.canonicalize();
    Ok(bx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_square() {
        let b = min_area_rectangle(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        assert!((b.volume() - 1.0).abs() < 1e-15);
        assert!((b.rotation.clone() - DMatrix::identity(2, 2)).amax() < 1e-15);
        assert!((b.center[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rotated_square() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let b = min_area_rectangle(&[[0.0, 0.0], [s, s], [0.0, 2.0 * s], [-s, s]]).unwrap();
        assert!((b.volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn calipers_match_exhaustive_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let n = rng.gen_range(3..200);
            let sx = rng.gen_range(0.1..5.0);
            let pts: Vec<P2> = (0..n)
                .map(|_| [sx * rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0) + 0.3 * rng.gen_range(-1.0..1.0)])
                .collect();
            let b = min_area_rectangle(&pts).unwrap();
            let min_edge = edge_aligned_areas(&pts).unwrap().into_iter().fold(f64::INFINITY, f64::min);
            assert!(b.volume() <= min_edge * (1.0 + 1e-9));
            for p in &pts {
                assert!(b.contains(&DVector::from_vec(p.to_vec()), 1e-9));
            }
        }
    }

    #[test]
    fn collinear_input_is_degenerate() {
        assert_eq!(
            min_area_rectangle(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]),
            Err(GeometryError::Degenerate { dim: 1 })
        );
    }
}
