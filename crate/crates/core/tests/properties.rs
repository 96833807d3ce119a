use morselab_core::boundary::{cross_ratio_value, in_stratum};
use morselab_core::contracting::{
    contracting_constant_exact, contracting_constant_sampled, project_point, SamplerConfig,
};
use morselab_core::extension::{boundary_agreement_probe, BarycenterMap, ExtendedMap};
use morselab_core::*;
use proptest::prelude::*;
use std::sync::Arc;

const LRP: ModelSpace = ModelSpace::LatticeRayPlane;

fn lrp_point() -> impl Strategy<Value = ModelPoint> {
    prop_oneof![
        (-20.0..20.0f64, -20.0..20.0f64).prop_map(|(x, y)| ModelPoint::plane(x, y)),
        (-10i64..10, -10i64..10, 0.0..15.0f64).prop_map(|(m, n, h)| ModelPoint::ray(m, n, h)),
        // Plane points exactly at lattice points, which are also ray feet.
        (-5i64..5, -5i64..5).prop_map(|(m, n)| ModelPoint::plane(m as f64, n as f64)),
    ]
}

fn lattice() -> impl Strategy<Value = BoundaryPoint> {
    (-6i64..6, -6i64..6).prop_map(|(m, n)| BoundaryPoint::lattice(m, n))
}

fn isometry() -> impl Strategy<Value = LatticeIsometry> {
    (0usize..8, -5i64..5, -5i64..5).prop_map(|(k, dx, dy)| {
        let mut g = LatticeIsometry::translation(dx, dy);
        for _ in 0..k % 4 {
            g = compose(LatticeIsometry::rotation(), g);
        }
        if k >= 4 {
            g = compose(LatticeIsometry::reflect_x(), g);
        }
        g
    })
}

fn compose(a: LatticeIsometry, b: LatticeIsometry) -> LatticeIsometry {
    // a ∘ b, computed from the action on three points.
    let o = a.apply_i(b.dx, b.dy);
    let e1 = a.apply_i(b.apply_i(1, 0).0, b.apply_i(1, 0).1);
    let e2 = a.apply_i(b.apply_i(0, 1).0, b.apply_i(0, 1).1);
    LatticeIsometry {
        linear: [[e1.0 - o.0, e2.0 - o.0], [e1.1 - o.1, e2.1 - o.1]],
        dx: o.0,
        dy: o.1,
    }
}

/// A random tree: vertex `i > 0` hangs off a parent in `0..i`.
fn tree() -> impl Strategy<Value = MetricTree> {
    (3usize..9)
        .prop_flat_map(|n| {
            (
                proptest::collection::vec(any::<prop::sample::Index>(), n - 1),
                proptest::collection::vec(0.5..3.0f64, n - 1),
            )
        })
        .prop_map(|(parents, lens)| {
            let edges = parents
                .iter()
                .zip(&lens)
                .enumerate()
                .map(|(i, (p, &l))| (p.index(i + 1), i + 1, l))
                .collect();
            MetricTree::new(edges, None).unwrap()
        })
}

fn tree_point(t: &MetricTree, pick: (prop::sample::Index, f64, u8)) -> ModelPoint {
    let (i, s, kind) = pick;
    match kind % 3 {
        0 => ModelPoint::TreeVertex {
            v: i.index(t.vertex_count()),
        },
        1 => {
            let (u, v, len) = t.edges()[i.index(t.edges().len())];
            ModelPoint::TreeEdge { u, v, t: s * len }
        }
        _ => ModelPoint::TreeRay {
            leaf: t.ends()[i.index(t.ends().len())],
            h: s * 5.0,
        },
    }
}

/// Floyd–Warshall vertex distances, independent of the tree's own search.
fn floyd(t: &MetricTree) -> Vec<Vec<f64>> {
    let n = t.vertex_count();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for &(u, v, l) in t.edges() {
        d[u][v] = l;
        d[v][u] = l;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Exits of a point to tree vertices: `(vertex, distance)`.
fn exits(t: &MetricTree, p: ModelPoint) -> Vec<(usize, f64)> {
    match p {
        ModelPoint::TreeVertex { v } => vec![(v, 0.0)],
        ModelPoint::TreeEdge { u, v, t: s } => {
            let l = t.edge_len(u, v).unwrap();
            vec![(u, s), (v, l - s)]
        }
        ModelPoint::TreeRay { leaf, h } => vec![(leaf, h)],
        _ => unreachable!(),
    }
}

fn chain_distance(t: &MetricTree, fw: &[Vec<f64>], p: ModelPoint, q: ModelPoint) -> f64 {
    let mut best = f64::INFINITY;
    match (p, q) {
        (ModelPoint::TreeEdge { u, v, t: a }, ModelPoint::TreeEdge { u: x, v: y, t: b }) if (u, v) == (x, y) => {
            best = (a - b).abs();
        }
        (ModelPoint::TreeRay { leaf, h }, ModelPoint::TreeRay { leaf: l2, h: g }) if leaf == l2 => {
            best = (h - g).abs();
        }
        _ => {}
    }
    for (a, da) in exits(t, p) {
        for &(b, db) in &exits(t, q) {
            best = best.min(da + fw[a][b] + db);
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn lattice_metric_axioms(p in lrp_point(), q in lrp_point(), r in lrp_point()) {
        let d = |a, b| LRP.distance(a, b).unwrap();
        prop_assert_eq!(d(p, p), 0.0);
        prop_assert!(d(p, q) >= 0.0);
        prop_assert_eq!(d(p, q), d(q, p));
        prop_assert!(d(p, r) <= d(p, q) + d(q, r) + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn tree_metric_matches_chain_oracle(
        t in tree(),
        a in (any::<prop::sample::Index>(), 0.0..1.0f64, any::<u8>()),
        b in (any::<prop::sample::Index>(), 0.0..1.0f64, any::<u8>()),
        c in (any::<prop::sample::Index>(), 0.0..1.0f64, any::<u8>()),
    ) {
        let fw = floyd(&t);
        let (p, q, r) = (tree_point(&t, a), tree_point(&t, b), tree_point(&t, c));
        let s = ModelSpace::MetricTree(t.clone());
        let d = |x, y| s.distance(x, y).unwrap();
        prop_assert!((d(p, q) - chain_distance(&t, &fw, p, q)).abs() < 1e-9);
        prop_assert_eq!(d(p, q), d(q, p));
        prop_assert!(d(p, r) <= d(p, q) + d(q, r) + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn geodesics_realize_distance(p in lrp_point(), q in lrp_point(), u in 0.0..1.0f64, v in 0.0..1.0f64) {
        prop_assume!(!LRP.same_point(p, q).unwrap());
        let g = geodesic(&LRP, p.into(), q.into()).unwrap();
        let (lo, hi) = g.param_range();
        prop_assert!((hi - lo - LRP.distance(p, q).unwrap()).abs() < 1e-9);
        let (s, t) = (lo + u.min(v) * (hi - lo), lo + u.max(v) * (hi - lo));
        let (x, y) = (g.point_at(&LRP, s).unwrap(), g.point_at(&LRP, t).unwrap());
        prop_assert!((LRP.distance(x, y).unwrap() - (t - s)).abs() < 1e-9);
    }

    #[test]
    fn lines_realize_distance_between_finite_points(a in lattice(), b in lattice(), u in -3.0..6.0f64, v in -3.0..6.0f64) {
        prop_assume!(a != b);
        let g = line(&LRP, a, b).unwrap();
        let (x, y) = (g.point_at(&LRP, u).unwrap(), g.point_at(&LRP, v).unwrap());
        prop_assert!((LRP.distance(x, y).unwrap() - (u - v).abs()).abs() < 1e-9);
    }

    #[test]
    fn projection_is_nonexpansive(a in lattice(), b in lattice(), x in (-20.0..20.0f64, -20.0..20.0f64), y in (-20.0..20.0f64, -20.0..20.0f64)) {
        prop_assume!(a != b);
        let g = line(&LRP, a, b).unwrap();
        let (p, q) = (ModelPoint::plane(x.0, x.1), ModelPoint::plane(y.0, y.1));
        let (_, fp) = project_point(&LRP, &g, p).unwrap();
        let (_, fq) = project_point(&LRP, &g, q).unwrap();
        prop_assert!(LRP.distance(fp, fq).unwrap() <= LRP.distance(p, q).unwrap() + 1e-9);
    }

    #[test]
    fn cross_ratio_antisymmetric(a in lattice(), b in lattice(), c in lattice(), d in lattice()) {
        prop_assume!(a != c && ![a, c].contains(&b) && ![a, c].contains(&d));
        let x = cross_ratio_value(&LRP, a, b, c, d).unwrap();
        let y = cross_ratio_value(&LRP, a, d, c, b).unwrap();
        prop_assert!((x + y).abs() < 1e-12);
    }

    #[test]
    fn isometries_preserve_distance_and_cross_ratio(
        g in isometry(), p in lrp_point(), q in lrp_point(),
        a in lattice(), b in lattice(), c in lattice(), d in lattice(),
    ) {
        let dist = LRP.distance(p, q).unwrap();
        prop_assert!((LRP.distance(p.transformed(&g), q.transformed(&g)).unwrap() - dist).abs() < 1e-9);
        prop_assume!(a != c && ![a, c].contains(&b) && ![a, c].contains(&d));
        let x = cross_ratio_value(&LRP, a, b, c, d).unwrap();
        let t = |z: BoundaryPoint| z.transformed(&g);
        let y = cross_ratio_value(&LRP, t(a), t(b), t(c), t(d)).unwrap();
        prop_assert!((x - y).abs() < 1e-9);
    }

    #[test]
    fn strata_are_nested(pts in proptest::collection::btree_set(lattice(), 2..5), d in 0.5..6.0f64, extra in 0.0..4.0f64) {
        let pts: Vec<_> = pts.into_iter().collect();
        if in_stratum(&LRP, &pts, d).unwrap().is_member() {
            prop_assert!(in_stratum(&LRP, &pts, d + extra).unwrap().is_member());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn sampled_constant_never_exceeds_exact(a in lattice(), b in lattice(), seed in any::<u64>()) {
        prop_assume!(a != b);
        let g = line(&LRP, a, b).unwrap();
        let exact = contracting_constant_exact(&LRP, &g).unwrap().d;
        let cfg = SamplerConfig { window: 4.0 * exact, balls: 400, samples_per_ball: 16, seed };
        let sampled = contracting_constant_sampled(&LRP, &g, &cfg).unwrap().d;
        prop_assert!(sampled <= exact + 1e-6, "sampled {} exact {}", sampled, exact);
    }

    #[test]
    fn ek_sets_contain_side_projections(i in any::<prop::sample::Index>(), g in isometry()) {
        let tables = TableSet::shared(&LRP).unwrap();
        let classes = tables::triangle_classes(&LRP, 2.0).unwrap();
        let t = classes[i.index(classes.len())].map(|b| b.transformed(&g));
        let pi = BarycenterMap::new(&LRP, 2.0, tables).unwrap();
        let e = pi.ek(&t).unwrap();
        for (a, b, c) in [(t[0], t[1], t[2]), (t[1], t[2], t[0]), (t[2], t[0], t[1])] {
            let alpha = line(&LRP, a, c).unwrap();
            let s = contracting::boundary_param(&LRP, &alpha, b).unwrap();
            prop_assert!(e.contains(&LRP, alpha.point_at(&LRP, s).unwrap()).unwrap());
        }
        prop_assert!(enclosing::diameter(&LRP, &e.samples).unwrap() <= tables.ek_diameter(2.0).unwrap());
        prop_assert!(LRP.distance(e.barycenter, pi.pi(t).unwrap()).unwrap() < 1e-9);
    }

    #[test]
    fn extension_commutes_with_translations(x in -4.0..4.0f64, y in -4.0..4.0f64, dx in -6i64..6, dy in -6i64..6) {
        let tables = TableSet::shared(&LRP).unwrap();
        let pi = Arc::new(BarycenterMap::new(&LRP, 2.0, tables).unwrap());
        let f = BoundaryMap::translation(2, 1);
        let h = ExtendedMap::from_parts(f, pi.clone(), pi, 2.0);
        let g = LatticeIsometry::translation(dx, dy);
        let p = ModelPoint::plane(x, y);
        let lhs = h.h(p.transformed(&g)).unwrap();
        let rhs = h.h(p).unwrap().transformed(&g);
        prop_assert!(LRP.distance(lhs, rhs).unwrap() < 1e-6);
    }
}

#[test]
fn boundary_agreement_at_base_is_finite() {
    let tables = TableSet::shared(&LRP).unwrap();
    let pi = Arc::new(BarycenterMap::new(&LRP, 2.0, tables).unwrap());
    let h = ExtendedMap::from_parts(BoundaryMap::identity(), pi.clone(), pi, 2.0);
    let rows = boundary_agreement_probe(&h, BoundaryPoint::lattice(0, 0), &[0.0]).unwrap();
    assert!(rows[0].deviation.is_finite());
}
