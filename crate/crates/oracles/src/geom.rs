//! Zonotope polygons by corner enumeration, and separating-axis distances.

use crate::P2;

fn sub(a: P2, b: P2) -> P2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: P2, b: P2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn cross(o: P2, a: P2, b: P2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// All `2^n` points `c ± g_1 ± … ± g_n`.
pub fn zonotope_corners(c: P2, gens: &[P2]) -> Vec<P2> {
    assert!(gens.len() < 20, "corner enumeration is exponential");
    (0..1usize << gens.len())
        .map(|mask| {
            let mut p = c;
            for (j, g) in gens.iter().enumerate() {
                let s = if mask >> j & 1 == 1 { 1.0 } else { -1.0 };
                p[0] += s * g[0];
                p[1] += s * g[1];
            }
            p
        })
        .collect()
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
/// Degenerate inputs give one or two vertices.
pub fn convex_hull(points: &[P2]) -> Vec<P2> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<P2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &P2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    if hull.is_empty() {
        // every point collinear: keep the two extremes
        return vec![pts[0], pts[pts.len() - 1]];
    }
    hull
}

pub fn zonotope_polygon(c: P2, gens: &[P2]) -> Vec<P2> {
    convex_hull(&zonotope_corners(c, gens))
}

/// Ray-casting free containment for convex CCW polygons.
pub fn polygon_contains(poly: &[P2], p: P2, tol: f64) -> bool {
    match poly.len() {
        0 => false,
        1 => norm(sub(p, poly[0])) <= tol,
        2 => segment_distance(poly[0], poly[1], p) <= tol,
        n => (0..n).all(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            let e = sub(b, a);
            cross(a, b, p) / norm(e) >= -tol
        }),
    }
}

fn norm(a: P2) -> f64 {
    a[0].hypot(a[1])
}

fn segment_distance(a: P2, b: P2, p: P2) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 {
        (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    norm(sub(p, [a[0] + t * ab[0], a[1] + t * ab[1]]))
}

fn candidate_axes(a: &[P2], b: &[P2]) -> Vec<P2> {
    let mut axes = Vec::new();
    for poly in [a, b] {
        let n = poly.len();
        for i in 0..n {
            let e = sub(poly[(i + 1) % n], poly[i]);
            axes.push([-e[1], e[0]]);
            axes.push(e);
        }
    }
    // closest features may be two vertices
    for &p in a {
        for &q in b {
            axes.push(sub(q, p));
        }
    }
    axes.retain(|v| norm(*v) > 1e-12);
    axes.iter().map(|v| [v[0] / norm(*v), v[1] / norm(*v)]).collect()
}

fn project(poly: &[P2], axis: P2) -> (f64, f64) {
    poly.iter()
        .map(|p| dot(*p, axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Signed separation of two convex polygons: the Euclidean gap when they
/// are disjoint, minus the penetration depth when they overlap.
pub fn signed_separation(a: &[P2], b: &[P2]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let axes = candidate_axes(a, b);
    if axes.is_empty() {
        // both are the same single point
        return 0.0;
    }
    axes.iter()
        .map(|&ax| {
            let (alo, ahi) = project(a, ax);
            let (blo, bhi) = project(b, ax);
            (blo - ahi).max(alo - bhi)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_from_two_generators() {
        let hull = zonotope_polygon([0.0, 0.0], &[[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(hull, vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]);
    }

    #[test]
    fn parallel_generators_make_a_segment() {
        let hull = zonotope_polygon([1.0, 1.0], &[[1.0, 1.0], [0.5, 0.5]]);
        assert_eq!(hull, vec![[-0.5, -0.5], [2.5, 2.5]]);
    }

    #[test]
    fn separation_of_boxes() {
        let a = zonotope_polygon([0.0, 0.0], &[[1.0, 0.0], [0.0, 1.0]]);
        let b = zonotope_polygon([3.0, 0.0], &[[1.0, 0.0], [0.0, 1.0]]);
        assert!((signed_separation(&a, &b) - 1.0).abs() < 1e-12);
        let c = zonotope_polygon([1.5, 0.0], &[[1.0, 0.0], [0.0, 1.0]]);
        assert!((signed_separation(&a, &c) + 0.5).abs() < 1e-12);
        // corner to corner
        let d = zonotope_polygon([3.0, 3.0], &[[1.0, 0.0], [0.0, 1.0]]);
        assert!((signed_separation(&a, &d) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn containment() {
        let sq = zonotope_polygon([0.0, 0.0], &[[1.0, 0.0], [0.0, 1.0]]);
        assert!(polygon_contains(&sq, [0.99, -0.99], 0.0));
        assert!(!polygon_contains(&sq, [1.01, 0.0], 0.0));
    }
}
