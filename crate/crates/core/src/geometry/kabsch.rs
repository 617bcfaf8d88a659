//! Optimal proper rotation between corresponding point sets, and its use to
//! turn an oriented box into an axis-aligned one.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::linalg::checked_svd;

use super::{GeometryError, OrientedBox};

/// Proper rotation `R` minimizing `||R p - q||_F` for corresponding columns.
pub fn kabsch(p: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let h = p * q.transpose();
    let svd = checked_svd(&h).expect("SVD of a small square matrix");
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let v = v_t.transpose();
    let d = v.nrows();
    let det = (&v * u.transpose()).determinant();
    let mut corr = DMatrix::identity(d, d);
    if det < 0.0 {
        corr[(d - 1, d - 1)] = -1.0;
    }
    v * corr * u.transpose()
}

/// `(H^T H)^{1/2} H^{-1}` for `H = P Q^T`, when `H` is well conditioned.
pub fn closed_form_rotation(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let h = p * q.transpose();
    let svd = checked_svd(&h)?;
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return None;
    }
    let hth = h.transpose() * &h;
    let eig = SymmetricEigen::new(hth);
    let sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()))
        * eig.eigenvectors.transpose();
    h.try_inverse().map(|hi| sqrt * hi)
}

/// Vertex sign patterns as columns of a `d x 2^d` matrix.
///
/// For two and three dimensions the order walks the box perimeter
/// (`(+,+), (+,-), (-,-), (-,+)` in 2D); higher dimensions use binary order.
pub fn sign_pattern(d: usize) -> DMatrix<f64> {
    match d {
        2 => DMatrix::from_row_slice(2, 4, &[1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0, 1.0]),
        3 => DMatrix::from_row_slice(
            3,
            8,
            &[
                1.0, 1.0, -1.0, -1.0, -1.0, -1.0, 1.0, 1.0, //
                1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0, //
                1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0,
            ],
        ),
        _ => DMatrix::from_fn(d, 1 << d, |i, k| if k >> i & 1 == 1 { -1.0 } else { 1.0 }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// Maps box axes (sorted by non-increasing extent) onto coordinate axes.
    pub rotation: DMatrix<f64>,
    /// Box centroid; the rotation pivots about it.
    pub center: DVector<f64>,
    /// Max entrywise gap between the SVD route and the closed form, when the
    /// latter is defined.
    pub closed_form_gap: Option<f64>,
}

/// Rotation taking the box to an axis-aligned box about its own centroid.
///
/// `P` holds the centered box vertices in the order of [`sign_pattern`], read
/// in the box frame with axes sorted by non-increasing extent; `Q` is the same
/// pattern scaled row-wise by the singular values of `P`. Of the equivalent
/// sign choices for the box axes, the one giving the largest trace is kept.
pub fn kabsch_align(bx: &OrientedBox) -> Result<Alignment, GeometryError> {
    let d = bx.dim();
    let scale = bx.half_extents.amax();
    if d == 0 || !(scale > 0.0) || bx.half_extents.iter().any(|h| !(*h > 1e-12 * scale)) {
        let dim = bx.half_extents.iter().filter(|h| **h > 1e-12 * scale).count();
        return Err(GeometryError::Degenerate { dim });
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| bx.half_extents[b].total_cmp(&bx.half_extents[a]).then(a.cmp(&b)));
    let axes = DMatrix::from_fn(d, d, |r, c| bx.rotation[(r, order[c])]);
    let half = DVector::from_fn(d, |c, _| bx.half_extents[order[c]]);
    let s = sign_pattern(d);

    let mut best: Option<(f64, Alignment)> = None;
    for mask in 0..1usize << d {
        let signs = DVector::from_fn(d, |i, _| if mask >> i & 1 == 1 { -1.0 } else { 1.0 });
        let b = DMatrix::from_fn(d, d, |r, c| signs[c] * axes[(r, c)]);
        if b.determinant() <= 0.0 {
            continue;
        }
        let p = &b * DMatrix::from_diagonal(&half) * &s;
        let sigma = checked_svd(&p).ok_or(GeometryError::Degenerate { dim: d })?.singular_values;
        let mut sv: Vec<f64> = sigma.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        let q = DMatrix::from_diagonal(&DVector::from_vec(sv)) * &s;
        let rotation = kabsch(&p, &q);
        let gap = closed_form_rotation(&p, &q).map(|c| (c - &rotation).amax());
        let tr = rotation.trace();
        if best.as_ref().is_none_or(|(t, _)| tr > *t + 1e-12) {
            best = Some((
                tr,
                Alignment {
                    rotation,
                    center: bx.center.clone(),
                    closed_form_gap: gap,
                },
            ));
        }
    }
    Ok(best.expect("some sign choice is proper").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rot2(phi: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[phi.cos(), -phi.sin(), phi.sin(), phi.cos()])
    }

    fn random_rotation3(rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
        let qr = m.qr();
        let mut q = qr.q();
        if q.determinant() < 0.0 {
            q.column_mut(0).neg_mut();
        }
        q
    }

    #[test]
    fn recovers_known_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = random_rotation3(&mut rng);
        let p = DMatrix::from_fn(3, 10, |_, _| rng.gen_range(-1.0..1.0));
        let q = &r * &p;
        assert!((kabsch(&p, &q) - &r).amax() < 1e-12);
        let c = closed_form_rotation(&p, &q).unwrap();
        assert!((c - r).amax() < 1e-9);
    }

    #[test]
    fn reflection_is_corrected() {
        let p = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, 1.0, 1.0]);
        let flip = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let r = kabsch(&p, &(flip * &p));
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn thirty_degree_box() {
        let phi = 30f64.to_radians();
        let bx = OrientedBox {
            center: DVector::from_vec(vec![1.0, -0.5]),
            rotation: rot2(phi),
            half_extents: DVector::from_vec(vec![2.0, 1.0]),
        };
        let al = kabsch_align(&bx).unwrap();
        assert!((al.rotation.clone() - rot2(-phi)).amax() < 1e-9);
        assert!(al.closed_form_gap.unwrap() < 1e-9);
        // Rotated vertices are axis aligned about the centroid.
        for v in bx.vertices() {
            let t = &al.rotation * (&v - &bx.center);
            assert!(((t[0].abs() - 2.0).abs() < 1e-9) && ((t[1].abs() - 1.0).abs() < 1e-9));
        }
    }

    #[test]
    fn aligned_box_is_fixed_point() {
        let bx = OrientedBox {
            center: DVector::zeros(3),
            rotation: DMatrix::identity(3, 3),
            half_extents: DVector::from_vec(vec![1.0, 3.0, 2.0]),
        };
        let al = kabsch_align(&bx).unwrap();
        // Signed permutation sorting axes by extent.
        for row in al.rotation.row_iter() {
            assert_eq!(row.iter().filter(|v| (v.abs() - 1.0).abs() < 1e-12).count(), 1);
        }
        assert!((al.rotation.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_3d_boxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let r = random_rotation3(&mut rng);
            let h = DVector::from_fn(3, |_, _| rng.gen_range(0.1..3.0));
            let bx = OrientedBox {
                center: DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0)),
                rotation: r,
                half_extents: h.clone(),
            };
            let al = kabsch_align(&bx).unwrap();
            assert!((al.rotation.transpose() * &al.rotation - DMatrix::identity(3, 3)).amax() < 1e-10);
            let mut sorted: Vec<f64> = h.iter().copied().collect();
            sorted.sort_by(|a, b| b.total_cmp(a));
            for v in bx.vertices() {
                let t = &al.rotation * (&v - &bx.center);
                for i in 0..3 {
                    assert!((t[i].abs() - sorted[i]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn flat_box_is_degenerate() {
        let bx = OrientedBox {
            center: DVector::zeros(2),
            rotation: DMatrix::identity(2, 2),
            half_extents: DVector::from_vec(vec![1.0, 0.0]),
        };
        assert_eq!(kabsch_align(&bx), Err(GeometryError::Degenerate { dim: 1 }));
    }
}
