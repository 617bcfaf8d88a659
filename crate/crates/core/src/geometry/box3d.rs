//! Approximate minimum-volume oriented box in three dimensions.
//!
//! Two stages: candidate orientations are taken from every hull facet (facet
//! normal as one axis, exact minimum rectangle of the projection for the other
//! two), the principal axes and the identity; the best few are then refined
//! by a local descent over small rotations about the current box axes, with
//! the step halved until it drops below `1e-2 * eps` radians.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, SymmetricEigen, Vector3};

use super::hull::{convex_hull_3d, P2, P3};
use super::rect2d::min_area_rectangle;
use super::{GeometryError, OrientedBox};

const REFINE_TOP: usize = 3;

/// Rows of `r` are box axes; returns (volume, lower, upper) in that frame.
fn frame_bounds(r: &Matrix3<f64>, pts: &[Vector3<f64>]) -> (f64, Vector3<f64>, Vector3<f64>) {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in pts {
        let l = r * p;
        lo = lo.inf(&l);
        hi = hi.sup(&l);
    }
    let e = hi - lo;
    (e.x * e.y * e.z, lo, hi)
}

fn orthonormal_complement(n: Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = n.cross(&helper).normalize();
    let w = n.cross(&u);
    (u, w)
}

fn facet_frame(n: Vector3<f64>, pts: &[Vector3<f64>]) -> Option<Matrix3<f64>> {
    let (u, w) = orthonormal_complement(n);
    let proj: Vec<P2> = pts.iter().map(|p| [u.dot(p), w.dot(p)]).collect();
    let rect = min_area_rectangle(&proj).ok()?;
    let a = rect.rotation.column(0);
    let b = rect.rotation.column(1);
    let ax = u * a[0] + w * a[1];
    let bx = u * b[0] + w * b[1];
    let r = Matrix3::from_rows(&[ax.transpose(), bx.transpose(), n.transpose()]);
    Some(proper(r))
}

fn proper(mut r: Matrix3<f64>) -> Matrix3<f64> {
    if r.determinant() < 0.0 {
        r.row_mut(2).neg_mut();
    }
    r
}

fn pca_frame(pts: &[Vector3<f64>]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let mean = pts.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let mut cov = Matrix3::zeros();
    for p in pts {
        let d = p - mean;
        cov += d * d.transpose();
    }
    proper(SymmetricEigen::new(cov).eigenvectors.transpose())
}

fn refine(mut r: Matrix3<f64>, pts: &[Vector3<f64>], eps: f64) -> (Matrix3<f64>, f64) {
    let mut vol = frame_bounds(&r, pts).0;
    let mut delta = 0.1f64;
    let min_delta = 1e-2 * eps;
    while delta >= min_delta {
        let mut improved = false;
        for axis in 0..3 {
            for sign in [1.0, -1.0] {
                let ax = Vector3::from_fn(|i, _| if i == axis { 1.0 } else { 0.0 });
                let step = Rotation3::from_axis_angle(&nalgebra::Unit::new_unchecked(ax), sign * delta);
                let cand = step.matrix() * r;
                let v = frame_bounds(&cand, pts).0;
                if v < vol * (1.0 - 1e-12) {
                    r = cand;
                    vol = v;
                    improved = true;
                }
            }
        }
        if !improved {
            delta *= 0.5;
        }
    }
    (r, vol)
}

pub fn min_volume_box3(points: &[P3], eps: f64, seed: u64) -> Result<OrientedBox, GeometryError> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(GeometryError::Unsupported(format!("box epsilon {eps} outside (0, 0.5]")));
    }
    let hull = convex_hull_3d(points, seed)?;
    let hv: Vec<Vector3<f64>> = hull.vertices.iter().map(|&i| Vector3::from(points[i])).collect();

    let mut frames: Vec<Matrix3<f64>> = Vec::new();
    for f in &hull.facets {
        if let Some(r) = facet_frame(Vector3::from(f.normal), &hv) {
            frames.push(r);
        }
    }
    frames.push(pca_frame(&hv));
    frames.push(Matrix3::identity());

    // Stable ordering: volume, then candidate index.
    let mut scored: Vec<(f64, usize)> = frames
        .iter()
        .enumerate()
        .map(|(k, r)| (frame_bounds(r, &hv).0, k))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut best: Option<(f64, Matrix3<f64>)> = None;
    for &(_, k) in scored.iter().take(REFINE_TOP) {
        let (r, v) = refine(frames[k], &hv, eps);
        if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
            best = Some((v, r));
        }
    }
    let (_, r) = best.expect("at least the identity candidate exists");
    let all: Vec<Vector3<f64>> = points.iter().map(|p| Vector3::from(*p)).collect();
    let (_, lo, hi) = frame_bounds(&r, &all);
    let mid = (lo + hi) * 0.5;
    let center = r.transpose() * mid;
    let axes = r.transpose();
    let mut bx = OrientedBox {
        center: DVector::from_column_slice(center.as_slice()),
        rotation: DMatrix::from_column_slice(3, 3, axes.as_slice()),
        half_extents: DVector::from_column_slice(((hi - lo) * 0.5).as_slice()),
    };
    bx.canonicalize();
    Ok(bx)
}
