//! Geodesics as finite chains of closed-form pieces.
//!
//! Every path is unit speed. Parameter 0 sits at the first finite endpoint;
//! a path that comes in from infinity is parametrized so that its incoming ray
//! occupies `(-∞, 0]`, which puts 0 at the start of the plane segment of a
//! bi-infinite lattice geodesic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{euclid, BoundaryPoint, Location, ModelPoint, ModelSpace, EPS_GEOM};

/// One closed-form piece of a geodesic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "piece", rename_all = "snake_case")]
pub enum Piece {
    PlaneSegment {
        from: [f64; 2],
        to: [f64; 2],
    },
    /// Part of the tree edge `{u, v}`, offsets measured from `u`.
    TreeEdgeSegment {
        u: usize,
        v: usize,
        from_t: f64,
        to_t: f64,
    },
    /// A finite stretch of a ray, in either direction.
    RaySegment {
        ray: BoundaryPoint,
        from_h: f64,
        to_h: f64,
    },
    RayAscentToInfinity {
        ray: BoundaryPoint,
        from_h: f64,
    },
    RayDescentFromInfinity {
        ray: BoundaryPoint,
        to_h: f64,
    },
}

impl Piece {
    pub fn length(&self) -> f64 {
        match *self {
            Piece::PlaneSegment { from, to } => euclid(from, to),
            Piece::TreeEdgeSegment { from_t, to_t, .. } => (to_t - from_t).abs(),
            Piece::RaySegment { from_h, to_h, .. } => (to_h - from_h).abs(),
            Piece::RayAscentToInfinity { .. } | Piece::RayDescentFromInfinity { .. } => f64::INFINITY,
        }
    }

    pub fn ray(&self) -> Option<BoundaryPoint> {
        match *self {
            Piece::RaySegment { ray, .. }
            | Piece::RayAscentToInfinity { ray, .. }
            | Piece::RayDescentFromInfinity { ray, .. } => Some(ray),
            _ => None,
        }
    }
}

/// A geodesic segment, ray or line in a model space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicPath {
    pieces: Vec<Piece>,
    /// Parameter interval `[lo, hi]` of each piece.
    ranges: Vec<(f64, f64)>,
    from: Location,
    to: Location,
}

impl GeodesicPath {
    fn from_pieces(pieces: Vec<Piece>, from: Location, to: Location) -> Self {
        debug_assert!(!pieces.is_empty());
        let mut ranges = Vec::with_capacity(pieces.len());
        let mut s = 0.0;
        for (i, p) in pieces.iter().enumerate() {
            match p {
                Piece::RayDescentFromInfinity { .. } => {
                    debug_assert_eq!(i, 0);
                    ranges.push((f64::NEG_INFINITY, 0.0));
                }
                _ => {
                    let hi = s + p.length();
                    ranges.push((s, hi));
                    s = hi;
                }
            }
        }
        GeodesicPath {
            pieces,
            ranges,
            from,
            to,
        }
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    pub fn from(&self) -> Location {
        self.from
    }

    pub fn to(&self) -> Location {
        self.to
    }

    pub fn param_range(&self) -> (f64, f64) {
        (self.ranges[0].0, self.ranges[self.ranges.len() - 1].1)
    }

    /// Total length of the finite pieces.
    pub fn finite_length(&self) -> f64 {
        self.pieces.iter().map(Piece::length).filter(|l| l.is_finite()).sum()
    }

    /// The parameter interval covered by finite pieces. For a path made of a
    /// single infinite piece this is the finite end of that piece.
    pub fn finite_range(&self) -> (f64, f64) {
        let (lo, hi) = self.param_range();
        let lo = if lo.is_finite() { lo } else { self.ranges[0].1 };
        let hi = if hi.is_finite() {
            hi
        } else {
            self.ranges[self.ranges.len() - 1].0
        };
        (lo, hi)
    }

    pub fn is_bi_infinite(&self) -> bool {
        matches!((self.from, self.to), (Location::Ideal(_), Location::Ideal(_)))
    }

    /// The plane segment of the path, if it has one.
    pub fn plane_segment(&self) -> Option<([f64; 2], [f64; 2])> {
        self.pieces.iter().find_map(|p| match *p {
            Piece::PlaneSegment { from, to } => Some((from, to)),
            _ => None,
        })
    }

    /// Whether the path runs off to infinity along `ray`.
    pub fn has_ideal_endpoint(&self, b: BoundaryPoint) -> bool {
        self.from == Location::Ideal(b) || self.to == Location::Ideal(b)
    }

    /// The largest height reached on `ray` by a finite piece (0 if none).
    pub fn max_height_on(&self, ray: BoundaryPoint) -> f64 {
        self.pieces
            .iter()
            .filter_map(|p| match *p {
                Piece::RaySegment { ray: r, from_h, to_h } if r == ray => Some(from_h.max(to_h)),
                _ => None,
            })
            .fold(0.0, f64::max)
    }

    fn piece_at(&self, s: f64) -> usize {
        self.ranges
            .iter()
            .position(|&(lo, hi)| s >= lo && s <= hi)
            .unwrap_or(if s < self.ranges[0].0 { 0 } else { self.ranges.len() - 1 })
    }

    /// The point at arc-length parameter `s` (clamped to the domain).
    pub fn point_at(&self, space: &ModelSpace, s: f64) -> Result<ModelPoint> {
        let (lo_all, hi_all) = self.param_range();
        let s = s.clamp(lo_all, hi_all);
        let i = self.piece_at(s);
        let (lo, hi) = self.ranges[i];
        let p = match self.pieces[i] {
            Piece::PlaneSegment { from, to } => {
                let len = hi - lo;
                let f = if len > 0.0 { (s - lo) / len } else { 0.0 };
                let f = f.clamp(0.0, 1.0);
                ModelPoint::Plane {
                    x: from[0] + (to[0] - from[0]) * f,
                    y: from[1] + (to[1] - from[1]) * f,
                }
            }
            Piece::TreeEdgeSegment { u, v, from_t, to_t } => {
                let t = from_t + (s - lo) * (to_t - from_t).signum();
                ModelPoint::TreeEdge {
                    u,
                    v,
                    t: t.clamp(from_t.min(to_t), from_t.max(to_t)),
                }
            }
            Piece::RaySegment { ray, from_h, to_h } => {
                let h = from_h + (s - lo) * (to_h - from_h).signum();
                ray.ray_point(h.clamp(from_h.min(to_h), from_h.max(to_h)))
            }
            Piece::RayAscentToInfinity { ray, from_h } => ray.ray_point(from_h + (s - lo)),
            Piece::RayDescentFromInfinity { ray, to_h } => ray.ray_point(to_h + (hi - s)),
        };
        space.canonical(p)
    }

    /// Nearest point on the path to a canonical point `p`: `(parameter, distance)`.
    ///
    /// Fails with [`Error::NonUniqueProjection`] if two pieces attain the
    /// minimum at parameters further apart than the uniqueness tolerance.
    pub fn closest(&self, space: &ModelSpace, p: ModelPoint) -> Result<(f64, f64)> {
        let p = space.canonical(p)?;
        let mut best = (f64::NAN, f64::INFINITY);
        let mut cands = [(0.0, 0.0); 8];
        let many = self.pieces.len() > cands.len();
        let mut all = Vec::new();
        for (i, piece) in self.pieces.iter().enumerate() {
            let c = closest_on_piece(space, piece, self.ranges[i], p)?;
            if c.1 < best.1 {
                best = c;
            }
            if many {
                all.push(c);
            } else {
                cands[i] = c;
            }
        }
        let cands: &[(f64, f64)] = if many { &all } else { &cands[..self.pieces.len()] };
        // Near-ties are only legitimate at shared piece endpoints.
        // Moving a distance `u` along a piece changes the distance to `p` by
        // about `u² / 2d` near a minimizer, so parameters closer than
        // `sqrt(2 d tol)` cannot be told apart.
        let tol = 1e-12 * (1.0 + best.1);
        let spread = 1e-6 + 4.0 * (2.0 * (1.0 + best.1) * tol).sqrt();
        for &(s, d) in cands {
            if d <= best.1 + tol && (s - best.0).abs() > spread {
                return Err(Error::NonUniqueProjection((s - best.0).abs()));
            }
        }
        Ok(best)
    }

    /// Distance from `p` to the path.
    pub fn distance_to(&self, space: &ModelSpace, p: ModelPoint) -> Result<f64> {
        let p = space.canonical(p)?;
        let mut best = f64::INFINITY;
        for (i, piece) in self.pieces.iter().enumerate() {
            best = best.min(closest_on_piece(space, piece, self.ranges[i], p)?.1);
        }
        Ok(best)
    }

    /// Parameters sampling the path: every piece boundary plus a uniform grid of
    /// spacing at most `step`. Infinite pieces are truncated `tail` beyond the
    /// finite part.
    pub fn sample_params(&self, step: f64, tail: f64) -> Vec<f64> {
        let (flo, fhi) = self.finite_range();
        let (lo, hi) = self.param_range();
        let lo = if lo.is_finite() { lo } else { flo - tail };
        let hi = if hi.is_finite() { hi } else { fhi + tail };
        let n = (((hi - lo) / step).ceil() as usize).max(1);
        let mut out: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        for &(a, b) in &self.ranges {
            for s in [a, b] {
                if s.is_finite() {
                    out.push(s);
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

fn same_ray_height(p: ModelPoint, ray: BoundaryPoint) -> Option<f64> {
    p.on_ray().filter(|(r, _)| *r == ray).map(|(_, h)| h)
}

fn closest_on_piece(space: &ModelSpace, piece: &Piece, (lo, hi): (f64, f64), p: ModelPoint) -> Result<(f64, f64)> {
    Ok(match *piece {
        Piece::PlaneSegment { from, to } => {
            let b = p.base().ok_or(Error::ChartMismatch {
                chart: p.chart_name(),
                space: space.kind_name(),
            })?;
            let d = [to[0] - from[0], to[1] - from[1]];
            let len2 = d[0] * d[0] + d[1] * d[1];
            let f = if len2 > 0.0 {
                (((b[0] - from[0]) * d[0] + (b[1] - from[1]) * d[1]) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let q = [from[0] + d[0] * f, from[1] + d[1] * f];
            (lo + f * (hi - lo), p.lift() + euclid(b, q))
        }
        Piece::TreeEdgeSegment { u, v, from_t, to_t } => {
            let tree = space.tree().expect("tree piece in a tree space");
            let len = tree.edge_len(u, v).expect("piece edge exists");
            let (tlo, thi) = (from_t.min(to_t), from_t.max(to_t));
            let to_param = |t: f64| lo + (t - from_t).abs();
            match p {
                ModelPoint::TreeEdge { u: a, v: b, t } if (a, b) == (u, v) || (a, b) == (v, u) => {
                    let tu = if (a, b) == (u, v) { t } else { len - t };
                    let ts = tu.clamp(tlo, thi);
                    (to_param(ts), (tu - ts).abs())
                }
                _ => {
                    let via_u = tree.to_vertex(p, u) + tlo;
                    let via_v = tree.to_vertex(p, v) + (len - thi);
                    if via_u <= via_v {
                        (to_param(tlo), via_u)
                    } else {
                        (to_param(thi), via_v)
                    }
                }
            }
        }
        Piece::RaySegment { ray, from_h, to_h } => {
            let (hlo, hhi) = (from_h.min(to_h), from_h.max(to_h));
            match same_ray_height(p, ray) {
                Some(h) => {
                    let hs = h.clamp(hlo, hhi);
                    (lo + (hs - from_h).abs(), (h - hs).abs())
                }
                None => (lo + (hlo - from_h).abs(), space.distance(p, ray.foot())? + hlo),
            }
        }
        Piece::RayAscentToInfinity { ray, from_h } => match same_ray_height(p, ray) {
            Some(h) => {
                let hs = h.max(from_h);
                (lo + (hs - from_h), h.max(from_h) - h)
            }
            None => (lo, space.distance(p, ray.foot())? + from_h),
        },
        Piece::RayDescentFromInfinity { ray, to_h } => match same_ray_height(p, ray) {
            Some(h) => {
                let hs = h.max(to_h);
                (hi - (hs - to_h), hs - h)
            }
            None => (hi, space.distance(p, ray.foot())? + to_h),
        },
    })
}

/// The unique geodesic from `a` to `b`.
pub fn geodesic(space: &ModelSpace, a: Location, b: Location) -> Result<GeodesicPath> {
    let a = space.check_location(a)?;
    let b = space.check_location(b)?;
    match (a, b) {
        (Location::Ideal(x), Location::Ideal(y)) if x == y => return Err(Error::SameEndpoints),
        (Location::Point(p), Location::Point(q)) if space.distance(p, q)? <= EPS_GEOM => {
            return Err(Error::SameEndpoints)
        }
        _ => {}
    }
    let pieces = match space {
        ModelSpace::EuclideanPlane => match (a, b) {
            (Location::Point(p), Location::Point(q)) => vec![Piece::PlaneSegment {
                from: p.base().expect("plane"),
                to: q.base().expect("plane"),
            }],
            _ => return Err(Error::NoBoundary(space.kind_name())),
        },
        ModelSpace::LatticeRayPlane => lattice_pieces(a, b),
        ModelSpace::MetricTree(_) => tree_pieces(space, a, b)?,
    };
    Ok(GeodesicPath::from_pieces(pieces, a, b))
}

/// Convenience wrapper for the bi-infinite geodesic between two boundary points.
pub fn line(space: &ModelSpace, a: BoundaryPoint, b: BoundaryPoint) -> Result<GeodesicPath> {
    geodesic(space, Location::Ideal(a), Location::Ideal(b))
}

/// How a location attaches to the plane: an optional ray with height
/// (infinite for boundary points) above a base point.
struct Handle {
    ray: Option<(BoundaryPoint, f64)>,
    base: [f64; 2],
}

fn lattice_handle(l: Location) -> Handle {
    match l {
        Location::Ideal(r) => Handle {
            ray: Some((r, f64::INFINITY)),
            base: r.foot().base().expect("lattice"),
        },
        Location::Point(p) => Handle {
            ray: p.on_ray(),
            base: p.base().expect("lattice"),
        },
    }
}

/// Height of `h` on `ray`, treating a plane point at the foot as height 0.
fn height_on(h: &Handle, ray: BoundaryPoint) -> Option<f64> {
    match h.ray {
        Some((r, ht)) if r == ray => Some(ht),
        None if euclid(h.base, ray.foot().base().expect("lattice")) <= EPS_GEOM => Some(0.0),
        _ => None,
    }
}

fn single_ray_piece(ray: BoundaryPoint, ha: f64, hb: f64) -> Piece {
    if ha.is_infinite() {
        Piece::RayDescentFromInfinity { ray, to_h: hb }
    } else if hb.is_infinite() {
        Piece::RayAscentToInfinity { ray, from_h: ha }
    } else {
        Piece::RaySegment {
            ray,
            from_h: ha,
            to_h: hb,
        }
    }
}

fn lattice_pieces(a: Location, b: Location) -> Vec<Piece> {
    let (ha, hb) = (lattice_handle(a), lattice_handle(b));
    for ray in [ha.ray.map(|r| r.0), hb.ray.map(|r| r.0)].into_iter().flatten() {
        if let (Some(x), Some(y)) = (height_on(&ha, ray), height_on(&hb, ray)) {
            return vec![single_ray_piece(ray, x, y)];
        }
    }
    let mut pieces = Vec::with_capacity(3);
    if let Some((ray, h)) = ha.ray {
        pieces.push(single_ray_piece(ray, h, 0.0));
    }
    if euclid(ha.base, hb.base) > 0.0 {
        pieces.push(Piece::PlaneSegment {
            from: ha.base,
            to: hb.base,
        });
    }
    if let Some((ray, h)) = hb.ray {
        pieces.push(single_ray_piece(ray, 0.0, h));
    }
    pieces
}

struct Portal {
    vertex: usize,
    cost: f64,
    pieces: Vec<Piece>,
}

/// Ways of leaving (`outgoing`) or reaching a location through a vertex.
fn tree_portals(space: &ModelSpace, l: Location, outgoing: bool) -> Vec<Portal> {
    let tree = space.tree().expect("tree");
    let seg = |u, v, a: f64, b: f64| {
        let (from_t, to_t) = if outgoing { (a, b) } else { (b, a) };
        Piece::TreeEdgeSegment { u, v, from_t, to_t }
    };
    match l {
        Location::Point(ModelPoint::TreeVertex { v }) => vec![Portal {
            vertex: v,
            cost: 0.0,
            pieces: vec![],
        }],
        Location::Point(ModelPoint::TreeEdge { u, v, t }) => {
            let len = tree.edge_len(u, v).expect("edge");
            vec![
                Portal {
                    vertex: u,
                    cost: t,
                    pieces: vec![seg(u, v, t, 0.0)],
                },
                Portal {
                    vertex: v,
                    cost: len - t,
                    pieces: vec![seg(u, v, t, len)],
                },
            ]
        }
        Location::Point(ModelPoint::TreeRay { leaf, h }) => {
            let ray = BoundaryPoint::TreeEnd { leaf };
            let (from_h, to_h) = if outgoing { (h, 0.0) } else { (0.0, h) };
            vec![Portal {
                vertex: leaf,
                cost: h,
                pieces: vec![Piece::RaySegment { ray, from_h, to_h }],
            }]
        }
        Location::Ideal(ray @ BoundaryPoint::TreeEnd { leaf }) => vec![Portal {
            vertex: leaf,
            cost: 0.0,
            pieces: vec![if outgoing {
                Piece::RayDescentFromInfinity { ray, to_h: 0.0 }
            } else {
                Piece::RayAscentToInfinity { ray, from_h: 0.0 }
            }],
        }],
        _ => unreachable!("validated tree location"),
    }
}

fn tree_ray_height(l: Location, ray: BoundaryPoint) -> Option<f64> {
    match l {
        Location::Ideal(r) if r == ray => Some(f64::INFINITY),
        Location::Point(p) => same_ray_height(p, ray),
        _ => None,
    }
}

fn tree_pieces(space: &ModelSpace, a: Location, b: Location) -> Result<Vec<Piece>> {
    let tree = space.tree().expect("tree");
    if let (
        Location::Point(ModelPoint::TreeEdge { u, v, t }),
        Location::Point(ModelPoint::TreeEdge { u: u2, v: v2, t: t2 }),
    ) = (a, b)
    {
        if (u, v) == (u2, v2) {
            return Ok(vec![Piece::TreeEdgeSegment {
                u,
                v,
                from_t: t,
                to_t: t2,
            }]);
        }
    }
    for &leaf in tree.ends() {
        let ray = BoundaryPoint::TreeEnd { leaf };
        if let (Some(x), Some(y)) = (tree_ray_height(a, ray), tree_ray_height(b, ray)) {
            return Ok(vec![single_ray_piece(ray, x, y)]);
        }
    }
    let outs = tree_portals(space, a, true);
    let ins = tree_portals(space, b, false);
    let (o, i) = outs
        .iter()
        .flat_map(|o| ins.iter().map(move |i| (o, i)))
        .min_by(|x, y| {
            let cx = x.0.cost + tree.vertex_distance(x.0.vertex, x.1.vertex) + x.1.cost;
            let cy = y.0.cost + tree.vertex_distance(y.0.vertex, y.1.vertex) + y.1.cost;
            cx.total_cmp(&cy)
        })
        .expect("portals");
    let mut pieces = o.pieces.clone();
    let vp = tree.vertex_path(o.vertex, i.vertex);
    for w in vp.windows(2) {
        let len = tree.edge_len(w[0], w[1]).expect("path edge");
        pieces.push(Piece::TreeEdgeSegment {
            u: w[0],
            v: w[1],
            from_t: 0.0,
            to_t: len,
        });
    }
    pieces.extend(i.pieces.iter().copied());
    if pieces.is_empty() {
        return Err(Error::SameEndpoints);
    }
    Ok(pieces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::MetricTree;

    const LRP: ModelSpace = ModelSpace::LatticeRayPlane;

    fn r(m: i64, n: i64) -> Location {
        Location::Ideal(BoundaryPoint::lattice(m, n))
    }

    #[test]
    fn bi_infinite_lattice_geodesic_shape() {
        for n in [-3, 0, 5] {
            let g = geodesic(&LRP, r(n, 0), r(n, 1)).unwrap();
            assert_eq!(
                g.pieces(),
                &[
                    Piece::RayDescentFromInfinity {
                        ray: BoundaryPoint::lattice(n, 0),
                        to_h: 0.0
                    },
                    Piece::PlaneSegment {
                        from: [n as f64, 0.0],
                        to: [n as f64, 1.0]
                    },
                    Piece::RayAscentToInfinity {
                        ray: BoundaryPoint::lattice(n, 1),
                        from_h: 0.0
                    },
                ]
            );
            assert_eq!(g.ranges()[1], (0.0, 1.0));
            assert!(g.is_bi_infinite());
        }
    }

    #[test]
    fn plane_points_give_one_segment() {
        let g = geodesic(
            &LRP,
            ModelPoint::plane(0.0, 0.0).into(),
            ModelPoint::plane(1.0, 1.0).into(),
        )
        .unwrap();
        assert_eq!(g.pieces().len(), 1);
        assert!(matches!(g.pieces()[0], Piece::PlaneSegment { .. }));
        assert!((g.finite_length() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn same_ray_is_one_piece() {
        let g = geodesic(
            &LRP,
            ModelPoint::ray(1, 1, 4.0).into(),
            ModelPoint::plane(1.0, 1.0).into(),
        )
        .unwrap();
        assert_eq!(g.pieces().len(), 1);
        assert_eq!(g.finite_length(), 4.0);
        let g = geodesic(&LRP, r(2, 2), ModelPoint::ray(2, 2, 3.0).into()).unwrap();
        assert_eq!(
            g.pieces(),
            &[Piece::RayDescentFromInfinity {
                ray: BoundaryPoint::lattice(2, 2),
                to_h: 3.0
            }]
        );
    }

    #[test]
    fn coincident_endpoints_rejected() {
        assert!(matches!(geodesic(&LRP, r(0, 0), r(0, 0)), Err(Error::SameEndpoints)));
        assert!(matches!(
            geodesic(
                &LRP,
                ModelPoint::ray(0, 0, 0.0).into(),
                ModelPoint::plane(0.0, 0.0).into()
            ),
            Err(Error::SameEndpoints)
        ));
        assert!(matches!(
            geodesic(&ModelSpace::EuclideanPlane, r(0, 0), ModelPoint::plane(1.0, 0.0).into()),
            Err(Error::NoBoundary(_))
        ));
    }

    #[test]
    fn point_at_and_closest_agree_on_path() {
        let g = geodesic(&LRP, r(-2, 0), r(2, 1)).unwrap();
        for s in [-5.0, -0.5, 0.0, 1.7, g.finite_length(), g.finite_length() + 3.0] {
            let p = g.point_at(&LRP, s).unwrap();
            let (t, d) = g.closest(&LRP, p).unwrap();
            assert!(d < 1e-12, "s={s} d={d}");
            assert!((t - s).abs() < 1e-9, "s={s} t={t}");
        }
    }

    #[test]
    fn tree_geodesic_through_centre() {
        let t = MetricTree::new(vec![(0, 1, 1.0), (0, 2, 2.0), (0, 3, 3.0)], None).unwrap();
        let space = ModelSpace::MetricTree(t);
        let g = geodesic(
            &space,
            Location::Ideal(BoundaryPoint::TreeEnd { leaf: 1 }),
            ModelPoint::TreeEdge { u: 0, v: 3, t: 1.5 }.into(),
        )
        .unwrap();
        assert_eq!(g.finite_length(), 2.5);
        assert_eq!(g.pieces().len(), 3);
        let mid = g.point_at(&space, 1.0).unwrap();
        assert_eq!(mid, ModelPoint::TreeVertex { v: 0 });
    }
}
