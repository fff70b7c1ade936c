use proptest::prelude::*;
use zonowalk::zono::{contains_point, intersects, minkowski_sum, to_halfspace, Vec2, Zonotope2};
use zonowalk_oracles::geom::{polygon_contains, signed_separation, zonotope_polygon};
use zonowalk_oracles::P2;

fn vec2(r: f64) -> impl Strategy<Value = Vec2> {
    (-r..r, -r..r).prop_map(|(x, y)| Vec2::new(x, y))
}

fn zonotope() -> impl Strategy<Value = Zonotope2> {
    (vec2(4.0), prop::collection::vec(vec2(1.0), 1..=8))
        .prop_filter("non-degenerate", |(_, g)| g.iter().all(|g| g.norm() > 1e-6))
        .prop_map(|(c, g)| Zonotope2::new(c, g).unwrap())
}

fn with_beta() -> impl Strategy<Value = (Zonotope2, Vec<f64>)> {
    zonotope().prop_flat_map(|z| {
        let n = z.n_generators();
        (Just(z), prop::collection::vec(-1.0..=1.0f64, n))
    })
}

fn polygon(z: &Zonotope2) -> Vec<P2> {
    let g: Vec<P2> = z.generators().iter().map(|g| [g.x, g.y]).collect();
    zonotope_polygon([z.center().x, z.center().y], &g)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn beta_points_are_contained((z, beta) in with_beta()) {
        prop_assert!(contains_point(&z, z.point_at(&beta)));
    }

    #[test]
    fn pushed_past_support_is_outside(z in zonotope(), a in 0.0..std::f64::consts::TAU, eps in 1e-3..1.0) {
        let d = Vec2::new(a.cos(), a.sin());
        let p = z.center() + (z.support(d) - z.center().dot(&d) + eps) * d;
        prop_assert!(!contains_point(&z, p));
    }

    #[test]
    fn minkowski_membership((z1, b1) in with_beta(), (z2, b2) in with_beta()) {
        let s = minkowski_sum(&z1, &z2);
        prop_assert!(contains_point(&s, z1.point_at(&b1) + z2.point_at(&b2)));
    }

    #[test]
    fn intersects_is_symmetric(a in zonotope(), b in zonotope()) {
        prop_assert_eq!(intersects(&a, &b), intersects(&b, &a));
    }

    #[test]
    fn intersects_matches_separating_axes(a in zonotope(), b in zonotope()) {
        let sep = signed_separation(&polygon(&a), &polygon(&b));
        prop_assume!(sep.abs() > 1e-9);
        prop_assert_eq!(intersects(&a, &b), sep < 0.0, "separation {}", sep);
    }

    #[test]
    fn halfspace_agrees_with_polygon(z in zonotope(), p in vec2(6.0)) {
        let poly = polygon(&z);
        let h = to_halfspace(&z).unwrap();
        let margin = h.max_violation(p);
        // far enough from the boundary for both to be unambiguous
        prop_assume!(margin.abs() > 1e-7);
        prop_assert_eq!(margin < 0.0, polygon_contains(&poly, [p.x, p.y], 0.0));
    }

    #[test]
    fn vertices_lie_on_the_boundary(z in zonotope()) {
        let h = to_halfspace(&z).unwrap();
        for v in z.vertices() {
            prop_assert!(h.max_violation(v).abs() < 1e-9);
        }
    }

    #[test]
    fn translation_preserves_containment(z in zonotope(), p in vec2(6.0), t in vec2(10.0)) {
        prop_assert_eq!(contains_point(&z, p), contains_point(&z.translated(t), p + t));
    }
}
