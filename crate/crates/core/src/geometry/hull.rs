//! Convex hulls in two and three dimensions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::GeometryError;

pub type P2 = [f64; 2];
pub type P3 = [f64; 3];

fn cross2(o: P2, a: P2, b: P2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn sub3(a: P3, b: P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot3(a: P3, b: P3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3(a: P3, b: P3) -> P3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm3(a: P3) -> f64 {
    dot3(a, a).sqrt()
}

/// Largest coordinate span, used to scale tolerances.
fn extent<const D: usize>(points: &[[f64; D]]) -> f64 {
    let mut e = 0.0f64;
    for k in 0..D {
        let lo = points.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
        e = e.max(hi - lo);
    }
    e
}

/// Counter-clockwise hull polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct Hull2 {
    /// Indices into the input, counter-clockwise, no repeated first vertex.
    pub indices: Vec<usize>,
    pub vertices: Vec<P2>,
}

impl Hull2 {
    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        0.5 * (0..n).map(|i| cross2([0.0, 0.0], v[i], v[(i + 1) % n])).sum::<f64>()
    }
}

/// Monotone chain. Collinear boundary points are dropped.
pub fn convex_hull_2d(points: &[P2]) -> Result<Hull2, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::Empty);
    }
    let scale = extent(points);
    if scale == 0.0 {
        return Err(GeometryError::Degenerate { dim: 0 });
    }
    let tol = 1e-12 * scale * scale;
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a][0]
            .total_cmp(&points[b][0])
            .then(points[a][1].total_cmp(&points[b][1]))
    });
    order.dedup_by(|a, b| points[*a] == points[*b]);

    let mut hull: Vec<usize> = Vec::with_capacity(2 * order.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &usize>> = if pass == 0 {
            Box::new(order.iter())
        } else {
            Box::new(order.iter().rev())
        };
        for &i in iter {
            while hull.len() >= start + 2
                && cross2(points[hull[hull.len() - 2]], points[hull[hull.len() - 1]], points[i]) <= tol
            {
                hull.pop();
            }
            hull.push(i);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        return Err(GeometryError::Degenerate { dim: 1 });
    }
    let h = Hull2 {
        vertices: hull.iter().map(|&i| points[i]).collect(),
        indices: hull,
    };
    if h.area() <= 1e-12 * scale * scale {
        return Err(GeometryError::Degenerate { dim: 1 });
    }
    Ok(h)
}

/// Triangular facet with outward unit normal: `normal . x <= offset` inside.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub vertices: [usize; 3],
    pub normal: P3,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hull3 {
    /// Indices of input points on the hull, sorted.
    pub vertices: Vec<usize>,
    pub facets: Vec<Facet>,
}

impl Hull3 {
    /// Whether `p` lies inside every facet plane inflated by `tol`.
    pub fn contains(&self, p: P3, tol: f64) -> bool {
        self.facets.iter().all(|f| dot3(f.normal, p) <= f.offset + tol)
    }
}

struct Face {
    v: [usize; 3],
    n: P3,
    off: f64,
    alive: bool,
}

fn make_face(points: &[P3], a: usize, b: usize, c: usize) -> Face {
    let n = cross3(sub3(points[b], points[a]), sub3(points[c], points[a]));
    let len = norm3(n);
    let n = [n[0] / len, n[1] / len, n[2] / len];
    Face {
        v: [a, b, c],
        n,
        off: dot3(n, points[a]),
        alive: true,
    }
}

/// Randomized incremental hull. Points within `1e-10 * extent` of the current
/// hull are treated as interior.
pub fn convex_hull_3d(points: &[P3], seed: u64) -> Result<Hull3, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::Empty);
    }
    let scale = extent(points);
    if scale == 0.0 {
        return Err(GeometryError::Degenerate { dim: 0 });
    }
    let eps = 1e-10 * scale;

    // Initial tetrahedron from extreme points.
    let i0 = (0..points.len()).min_by(|&a, &b| points[a][0].total_cmp(&points[b][0])).unwrap();
    let i1 = (0..points.len())
        .max_by(|&a, &b| norm3(sub3(points[a], points[i0])).total_cmp(&norm3(sub3(points[b], points[i0]))))
        .unwrap();
    let d01 = sub3(points[i1], points[i0]);
    let line_dist = |p: P3| norm3(cross3(d01, sub3(p, points[i0]))) / norm3(d01);
    let i2 = (0..points.len())
        .max_by(|&a, &b| line_dist(points[a]).total_cmp(&line_dist(points[b])))
        .unwrap();
    if line_dist(points[i2]) <= eps {
        return Err(GeometryError::Degenerate { dim: 1 });
    }
    let nrm = cross3(d01, sub3(points[i2], points[i0]));
    let nl = norm3(nrm);
    let plane_dist = |p: P3| dot3(nrm, sub3(p, points[i0])) / nl;
    let i3 = (0..points.len())
        .max_by(|&a, &b| plane_dist(points[a]).abs().total_cmp(&plane_dist(points[b]).abs()))
        .unwrap();
    if plane_dist(points[i3]).abs() <= eps {
        return Err(GeometryError::Degenerate { dim: 2 });
    }

    let mut faces: Vec<Face> = Vec::new();
    let tet = [i0, i1, i2, i3];
    let centroid = {
        let mut c = [0.0; 3];
        for &i in &tet {
            for k in 0..3 {
                c[k] += points[i][k] / 4.0;
            }
        }
        c
    };
    for (a, b, c) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
        let mut f = make_face(points, tet[a], tet[b], tet[c]);
        if dot3(f.n, centroid) > f.off {
            f = make_face(points, tet[a], tet[c], tet[b]);
        }
        faces.push(f);
    }

    let mut rest: Vec<usize> = (0..points.len()).filter(|i| !tet.contains(i)).collect();
    rest.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut horizon: Vec<(usize, usize)> = Vec::new();
    let mut visible: Vec<usize> = Vec::new();
    for p in rest {
        let x = points[p];
        visible.clear();
        for (k, f) in faces.iter().enumerate() {
            if f.alive && dot3(f.n, x) - f.off > eps {
                visible.push(k);
            }
        }
        if visible.is_empty() {
            continue;
        }
        horizon.clear();
        for &k in &visible {
            let v = faces[k].v;
            for e in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])] {
                if let Some(pos) = horizon.iter().position(|&(a, b)| a == e.1 && b == e.0) {
                    horizon.swap_remove(pos);
                } else {
                    horizon.push(e);
                }
            }
        }
        for &k in &visible {
            faces[k].alive = false;
        }
        for &(a, b) in &horizon {
            faces.push(make_face(points, a, b, p));
        }
        if faces.len() > 64 && faces.iter().filter(|f| !f.alive).count() * 2 > faces.len() {
            faces.retain(|f| f.alive);
        }
    }

    let facets: Vec<Facet> = faces
        .into_iter()
        .filter(|f| f.alive)
        .map(|f| Facet {
            vertices: f.v,
            normal: f.n,
            offset: f.off,
        })
        .collect();
    // Keep only extreme points: a corner's incident facet normals span 3D,
    // whereas points inside a flat face or on an edge span at most 2.
    let mut candidates: Vec<usize> = facets.iter().flat_map(|f| f.vertices).collect();
    candidates.sort_unstable();
    candidates.dedup();
    let vertices = candidates
        .into_iter()
        .filter(|&v| {
            let normals: Vec<P3> = facets
                .iter()
                .filter(|f| f.vertices.contains(&v))
                .map(|f| f.normal)
                .collect();
            normals_span_3d(&normals)
        })
        .collect();
    Ok(Hull3 { vertices, facets })
}

fn normals_span_3d(normals: &[P3]) -> bool {
    const TOL: f64 = 1e-9;
    let Some(&a) = normals.first() else { return false };
    let Some(&b) = normals.iter().find(|n| norm3(cross3(a, **n)) > TOL) else {
        return false;
    };
    let ab = cross3(a, b);
    let ab = {
        let l = norm3(ab);
        [ab[0] / l, ab[1] / l, ab[2] / l]
    };
    normals.iter().any(|n| dot3(ab, *n).abs() > TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn square_with_interior_points() {
        let pts = [
            [0.0, 0.0],
            [1.0, 0.0],
            [0.5, 0.5],
            [1.0, 1.0],
            [0.2, 0.7],
            [0.0, 1.0],
            [0.5, 0.0],
        ];
        let h = convex_hull_2d(&pts).unwrap();
        let mut idx = h.indices.clone();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 3, 5]);
        assert!((h.area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_2d() {
        let line = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [0.5, 0.5]];
        assert_eq!(convex_hull_2d(&line), Err(GeometryError::Degenerate { dim: 1 }));
        assert_eq!(
            convex_hull_2d(&[[1.0, 1.0], [1.0, 1.0]]),
            Err(GeometryError::Degenerate { dim: 0 })
        );
    }

    #[test]
    fn cube_hull() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push([(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64]);
        }
        pts.push([0.5, 0.5, 0.5]);
        pts.push([0.5, 0.5, 0.0]);
        let h = convex_hull_3d(&pts, 1).unwrap();
        assert_eq!(h.vertices, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn random_cloud_containment() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..10 {
            let pts: Vec<P3> = (0..300)
                .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0), rng.gen_range(-0.5..0.5)])
                .collect();
            let h = convex_hull_3d(&pts, trial).unwrap();
            for p in &pts {
                assert!(h.contains(*p, 1e-9));
            }
            // Euler: V - E + F = 2 with E = 3F/2.
            assert_eq!(h.vertices.len() as i64 - (3 * h.facets.len() / 2) as i64 + h.facets.len() as i64, 2);
        }
    }

    #[test]
    fn degenerate_3d() {
        let plane: Vec<P3> = (0..10).map(|i| [i as f64, (i * i) as f64, 0.0]).collect();
        assert_eq!(convex_hull_3d(&plane, 0), Err(GeometryError::Degenerate { dim: 2 }));
        let line: Vec<P3> = (0..10).map(|i| [i as f64, 2.0 * i as f64, 0.0]).collect();
        assert_eq!(convex_hull_3d(&line, 0), Err(GeometryError::Degenerate { dim: 1 }));
    }
}
