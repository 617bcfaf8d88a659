//! Enclosing regions for reduced scheduling clouds.
//!
//! A region is described by a rotation `R` about a pivot `c` together with
//! axis-aligned bounds on the rotated coordinates `theta = R (rho - c) + c`.
//! Point sets are passed as `d x N` matrices, one point per column.

mod box3d;
mod hull;
mod kabsch;
mod mvee;
mod rect2d;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

pub use box3d::min_volume_box3;
pub use hull::{convex_hull_2d, convex_hull_3d, Facet, Hull2, Hull3, P2, P3};
pub use kabsch::{closed_form_rotation, kabsch, kabsch_align, sign_pattern, Alignment};
pub use mvee::{mvee, MveeOptions};
pub use rect2d::{edge_aligned_areas, min_area_rectangle};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("empty point set")]
    Empty,
    #[error("degenerate point cloud: spans an affine subspace of dimension {dim}")]
    Degenerate { dim: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Box `{ c + A diag(s) h : |s_i| <= 1 }` with orthonormal axes `A` (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct OrientedBox {
    pub center: DVector<f64>,
    /// Columns are the box axes; proper rotation.
    pub rotation: DMatrix<f64>,
    pub half_extents: DVector<f64>,
}

impl OrientedBox {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn volume(&self) -> f64 {
        self.half_extents.iter().map(|h| 2.0 * h).product()
    }

    /// Coordinates of `p` in the box frame, relative to the center.
    pub fn local(&self, p: &DVector<f64>) -> DVector<f64> {
        self.rotation.transpose() * (p - &self.center)
    }

    pub fn contains(&self, p: &DVector<f64>, rel_tol: f64) -> bool {
        let l = self.local(p);
        let scale = self.half_extents.amax().max(self.center.amax()).max(1e-300);
        l.iter()
            .zip(self.half_extents.iter())
            .all(|(x, h)| x.abs() <= h + rel_tol * scale)
    }

    /// All `2^d` corners, the `k`-th using sign `-` on axis `i` when bit `i`
    /// of `k` is set.
    pub fn vertices(&self) -> Vec<DVector<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|k| {
                let mut v = self.center.clone();
                for i in 0..d {
                    let s = if k >> i & 1 == 1 { -1.0 } else { 1.0 };
                    v += self.rotation.column(i) * (s * self.half_extents[i]);
                }
                v
            })
            .collect()
    }

    /// Re-express the same box with the signed axis permutation closest to the
    /// identity (largest trace, determinant +1).
    pub fn canonicalize(&mut self) {
        let d = self.dim();
        if d == 0 || d > 6 {
            return;
        }
        let (perm, signs) = best_signed_permutation(&self.rotation);
        let rot = DMatrix::from_fn(d, d, |r, c| signs[c] * self.rotation[(r, perm[c])]);
        let half = DVector::from_fn(d, |c, _| self.half_extents[perm[c]]);
        self.rotation = rot;
        self.half_extents = half;
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..n {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Signed column permutation `(perm, signs)` of `a` maximizing the trace while
/// keeping the determinant positive.
pub(crate) fn best_signed_permutation(a: &DMatrix<f64>) -> (Vec<usize>, Vec<f64>) {
    let d = a.ncols();
    let det = a.determinant();
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    for perm in permutations(d) {
        let parity = perm_parity(&perm);
        for mask in 0..1usize << d {
            let signs: Vec<f64> = (0..d).map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
            let sign_prod: f64 = signs.iter().product();
            if det * parity * sign_prod <= 0.0 {
                continue;
            }
            let tr: f64 = (0..d).map(|c| signs[c] * a[(c, perm[c])]).sum();
            if best.as_ref().is_none_or(|b| tr > b.0 + 1e-12) {
                best = Some((tr, perm.clone(), signs));
            }
        }
    }
    let (_, p, s) = best.expect("at least one signed permutation has positive determinant");
    (p, s)
}

fn perm_parity(p: &[usize]) -> f64 {
    let mut inv = 0;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            if p[i] > p[j] {
                inv += 1;
            }
        }
    }
    if inv % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `{ v : (v - c)^T P (v - c) <= 1 }`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub shape: DMatrix<f64>,
    pub center: DVector<f64>,
}

impl Ellipsoid {
    pub fn constraint(&self, v: &DVector<f64>) -> f64 {
        let d = v - &self.center;
        (d.transpose() * &self.shape * &d)[(0, 0)]
    }

    pub fn volume_factor(&self) -> f64 {
        1.0 / self.shape.determinant().sqrt()
    }
}

/// Rotation `U_e^T` that diagonalizes the shape matrix, plus the pivot.
///
/// Eigenvalues are sorted non-increasing; each eigenvector's largest entry is
/// made positive and the last one is flipped if needed for determinant +1.
pub fn ellipsoid_axis_align(ell: &Ellipsoid) -> (DMatrix<f64>, DVector<f64>) {
    let d = ell.center.len();
    let sym = (&ell.shape + ell.shape.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut u = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
    crate::reduction::fix_column_signs(&mut u);
    if u.determinant() < 0.0 {
        let last = d - 1;
        u.column_mut(last).neg_mut();
    }
    (u.transpose(), ell.center.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionMethod {
    AxisAligned,
    Box2d,
    Box3d,
    Ellipsoid,
}

impl RegionMethod {
    pub fn name(self) -> &'static str {
        match self {
            RegionMethod::AxisAligned => "axis-aligned",
            RegionMethod::Box2d => "box2d",
            RegionMethod::Box3d => "box3d",
            RegionMethod::Ellipsoid => "ellipsoid",
        }
    }
}

impl FromStr for RegionMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "axis-aligned" => Ok(RegionMethod::AxisAligned),
            "box2d" => Ok(RegionMethod::Box2d),
            "box3d" => Ok(RegionMethod::Box3d),
            "ellipsoid" => Ok(RegionMethod::Ellipsoid),
            _ => Err(format!("unknown region method `{s}`")),
        }
    }
}

impl fmt::Display for RegionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Axis-aligned bounds on `theta = R (rho - c) + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulingRegion {
    pub method: RegionMethod,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub rotation: DMatrix<f64>,
    pub center: DVector<f64>,
    pub volume: f64,
}

impl SchedulingRegion {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// `rho -> theta`.
    pub fn transform(&self, rho: &DVector<f64>) -> DVector<f64> {
        &self.rotation * (rho - &self.center) + &self.center
    }

    /// `theta -> rho`.
    pub fn inverse(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.rotation.transpose() * (theta - &self.center) + &self.center
    }

    pub fn transform_all(&self, rho: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = &self.rotation * rho;
        let shift = &self.center - &self.rotation * &self.center;
        for mut col in out.column_iter_mut() {
            col += &shift;
        }
        out
    }

    fn slack(&self, rel_tol: f64) -> f64 {
        let scale = self.lower.amax().max(self.upper.amax()).max(1.0);
        rel_tol * scale
    }

    /// Whether `theta` lies in the bounds inflated by `rel_tol` (relative to the
    /// largest bound magnitude, at least 1).
    pub fn contains(&self, theta: &DVector<f64>, rel_tol: f64) -> bool {
        let s = self.slack(rel_tol);
        theta
            .iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(t, (l, u))| *t >= l - s && *t <= u + s)
    }

    /// Corners of the bounds in the theta frame (same ordering as
    /// [`OrientedBox::vertices`]).
    pub fn vertices(&self) -> Vec<DVector<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|k| DVector::from_fn(d, |i, _| if k >> i & 1 == 1 { self.lower[i] } else { self.upper[i] }))
            .collect()
    }
}

/// Per-coordinate min/max; rotation identity, pivot at the origin.
pub fn axis_aligned_bounds(points: &DMatrix<f64>) -> Result<SchedulingRegion, GeometryError> {
    if points.ncols() == 0 || points.nrows() == 0 {
        return Err(GeometryError::Empty);
    }
    let d = points.nrows();
    let lower = DVector::from_fn(d, |i, _| points.row(i).min());
    let upper = DVector::from_fn(d, |i, _| points.row(i).max());
    let volume = (&upper - &lower).iter().product();
    Ok(SchedulingRegion {
        method: RegionMethod::AxisAligned,
        lower,
        upper,
        rotation: DMatrix::identity(d, d),
        center: DVector::zeros(d),
        volume,
    })
}

fn bounds_after(
    method: RegionMethod,
    points: &DMatrix<f64>,
    rotation: DMatrix<f64>,
    center: DVector<f64>,
) -> SchedulingRegion {
    let mut region = SchedulingRegion {
        method,
        lower: DVector::zeros(points.nrows()),
        upper: DVector::zeros(points.nrows()),
        rotation,
        center,
        volume: 0.0,
    };
    let theta = region.transform_all(points);
    let aab = axis_aligned_bounds(&theta).expect("non-empty");
    region.lower = aab.lower;
    region.upper = aab.upper;
    region.volume = aab.volume;
    region
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegionStrategy {
    /// Axis-aligned for d = 1, minimal box for d = 2, 3, ellipsoid otherwise.
    #[default]
    Auto,
    AxisAligned,
    Box,
    Ellipsoid,
}

impl FromStr for RegionStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(RegionStrategy::Auto),
            "axis" | "axis-aligned" => Ok(RegionStrategy::AxisAligned),
            "box" => Ok(RegionStrategy::Box),
            "ellipsoid" => Ok(RegionStrategy::Ellipsoid),
            _ => Err(format!("unknown region strategy `{s}` (auto | axis-aligned | box | ellipsoid)")),
        }
    }
}

impl RegionStrategy {
    pub fn name(self) -> &'static str {
        match self {
            RegionStrategy::Auto => "auto",
            RegionStrategy::AxisAligned => "axis-aligned",
            RegionStrategy::Box => "box",
            RegionStrategy::Ellipsoid => "ellipsoid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionOptions {
    pub mvee: MveeOptions,
    /// Approximation parameter of the 3D box search, in (0, 0.5].
    pub box_eps: f64,
    /// Seed for the randomized hull insertion order.
    pub seed: u64,
}

impl Default for RegionOptions {
    fn default() -> Self {
        Self {
            mvee: MveeOptions::default(),
            box_eps: 0.01,
            seed: 0,
        }
    }
}

/// Region plus the intermediate objects it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionFit {
    pub region: SchedulingRegion,
    /// Bounds of the untransformed points.
    pub axis_aligned: SchedulingRegion,
    pub oriented_box: Option<OrientedBox>,
    pub ellipsoid: Option<Ellipsoid>,
    pub alignment: Option<Alignment>,
}

pub(crate) fn columns_as<const D: usize>(points: &DMatrix<f64>) -> Vec<[f64; D]> {
    points
        .column_iter()
        .map(|c| {
            let mut p = [0.0; D];
            for k in 0..D {
                p[k] = c[k];
            }
            p
        })
        .collect()
}

pub fn fit_region(
    points: &DMatrix<f64>,
    strategy: RegionStrategy,
    opts: &RegionOptions,
) -> Result<RegionFit, GeometryError> {
    let axis_aligned = axis_aligned_bounds(points)?;
    let d = points.nrows();
    let strategy = match strategy {
        RegionStrategy::Auto => match d {
            1 => RegionStrategy::AxisAligned,
            2 | 3 => RegionStrategy::Box,
            _ => RegionStrategy::Ellipsoid,
        },
        RegionStrategy::Ellipsoid if d == 1 => RegionStrategy::AxisAligned,
        RegionStrategy::Box if d == 1 => RegionStrategy::AxisAligned,
        s => s,
    };
    let mut fit = RegionFit {
        region: axis_aligned.clone(),
        axis_aligned,
        oriented_box: None,
        ellipsoid: None,
        alignment: None,
    };
    match strategy {
        RegionStrategy::AxisAligned | RegionStrategy::Auto => {}
        RegionStrategy::Box => {
            let (bx, method) = match d {
                2 => (min_area_rectangle(&columns_as::<2>(points))?, RegionMethod::Box2d),
                3 => (
                    min_volume_box3(&columns_as::<3>(points), opts.box_eps, opts.seed)?,
                    RegionMethod::Box3d,
                ),
                _ => {
                    return Err(GeometryError::Unsupported(format!(
                        "minimal box search is implemented for 2 and 3 dimensions, got {d}"
                    )))
                }
            };
            let al = kabsch_align(&bx)?;
            fit.region = bounds_after(method, points, al.rotation.clone(), al.center.clone());
            fit.oriented_box = Some(bx);
            fit.alignment = Some(al);
        }
        RegionStrategy::Ellipsoid => {
            let ell = mvee(points, &opts.mvee)?;
            let (rot, c) = ellipsoid_axis_align(&ell);
            fit.region = bounds_after(RegionMethod::Ellipsoid, points, rot, c);
            fit.ellipsoid = Some(ell);
        }
    }
    Ok(fit)
}

pub fn region_from_points(points: &DMatrix<f64>, strategy: RegionStrategy) -> Result<SchedulingRegion, GeometryError> {
    Ok(fit_region(points, strategy, &RegionOptions::default())?.region)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rot2(phi: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[phi.cos(), -phi.sin(), phi.sin(), phi.cos()])
    }

    #[test]
    fn axis_aligned_cases() {
        let pts = DMatrix::from_column_slice(2, 2, &[0.0, 0.0, 1.0, 2.0]);
        let r = axis_aligned_bounds(&pts).unwrap();
        assert_eq!(r.lower.as_slice(), &[0.0, 0.0]);
        assert_eq!(r.upper.as_slice(), &[1.0, 2.0]);
        assert_eq!(r.volume, 2.0);
        let one = DMatrix::from_column_slice(2, 1, &[3.0, 4.0]);
        assert_eq!(axis_aligned_bounds(&one).unwrap().volume, 0.0);
        assert_eq!(axis_aligned_bounds(&DMatrix::zeros(2, 0)), Err(GeometryError::Empty));
    }

    #[test]
    fn scalar_region() {
        let pts = DMatrix::from_row_slice(1, 4, &[0.0, -2.0, 3.0, 1.0]);
        let r = region_from_points(&pts, RegionStrategy::Auto).unwrap();
        assert_eq!((r.lower[0], r.upper[0]), (-2.0, 3.0));
        assert_eq!(r.rotation[(0, 0)], 1.0);
        let e = region_from_points(&pts, RegionStrategy::Ellipsoid).unwrap();
        assert_eq!(e.method, RegionMethod::AxisAligned);
    }

    #[test]
    fn box_strategy_beyond_three_dims_is_unsupported() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = DMatrix::from_fn(4, 30, |_, _| rng.gen_range(-1.0..1.0));
        assert!(matches!(
            region_from_points(&pts, RegionStrategy::Box),
            Err(GeometryError::Unsupported(_))
        ));
    }

    #[test]
    fn rotated_rectangle_region() {
        let base = DMatrix::from_row_slice(2, 4, &[2.0, -2.0, -2.0, 2.0, 1.0, 1.0, -1.0, -1.0]);
        let pts = rot2(0.4) * base;
        let r = region_from_points(&pts, RegionStrategy::Box).unwrap();
        assert!((r.volume - 8.0).abs() < 1e-9);
        let aa = axis_aligned_bounds(&pts).unwrap();
        assert!(r.volume < aa.volume);
        for c in pts.column_iter() {
            assert!(r.contains(&r.transform(&c.into_owned()), 1e-9));
        }
    }

    #[test]
    fn transform_inverse_round_trip() {
        let pts = rot2(0.3) * DMatrix::from_row_slice(2, 4, &[3.0, -1.0, 0.5, 2.0, 1.0, 0.0, -1.0, 0.2]);
        let r = region_from_points(&pts, RegionStrategy::Box).unwrap();
        let p = DVector::from_vec(vec![0.7, -0.3]);
        assert!((r.inverse(&r.transform(&p)) - &p).amax() < 1e-14);
    }

    #[test]
    fn ellipsoid_alignment_diagonalizes() {
        let r = rot2(0.6);
        let shape = r.transpose() * DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])) * &r;
        let ell = Ellipsoid {
            shape: shape.clone(),
            center: DVector::from_vec(vec![0.5, -1.0]),
        };
        let (u, _) = ellipsoid_axis_align(&ell);
        let diag = &u * shape * u.transpose();
        assert!(diag[(0, 1)].abs() < 1e-10);
        let mut ev = vec![diag[(0, 0)], diag[(1, 1)]];
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - 1.0).abs() < 1e-10 && (ev[1] - 4.0).abs() < 1e-10);
        assert!((u.determinant() - 1.0).abs() < 1e-10);

        let already = Ellipsoid {
            shape: DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 5.0])),
            center: DVector::zeros(2),
        };
        let (u, _) = ellipsoid_axis_align(&already);
        assert!(u.iter().all(|v| v.abs() < 1e-12 || (v.abs() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn canonicalize_keeps_box() {
        let mut b = OrientedBox {
            center: DVector::from_vec(vec![1.0, 2.0]),
            rotation: rot2(1.4),
            half_extents: DVector::from_vec(vec![3.0, 1.0]),
        };
        let before: Vec<_> = b.vertices();
        b.canonicalize();
        assert!(b.rotation.trace() >= rot2(1.4).trace());
        assert!((b.rotation.determinant() - 1.0).abs() < 1e-12);
        for v in before {
            assert!(b.vertices().iter().any(|w| (w - &v).amax() < 1e-12));
        }
    }
}
