//! Minimum enclosing balls and diameters of finite clouds.
//!
//! The barycenter of a bounded set is taken to be its circumcenter, the center
//! of the smallest enclosing ball, which is unique in a CAT(0) space.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::path::geodesic;
use crate::sampling::stream_rng;
use crate::space::{euclid, ModelPoint, ModelSpace};

/// Vertices of an inscribed polygon standing in for a weighted lattice point.
const DISK_SIDES: usize = 128;

/// Smallest enclosing circle of plane points (randomized incremental Welzl).
pub fn min_enclosing_circle(points: &[[f64; 2]], seed: u64) -> Option<([f64; 2], f64)> {
    let mut pts = points.to_vec();
    pts.shuffle(&mut stream_rng(seed, 0));
    let first = *pts.first()?;
    let inside = |c: [f64; 2], r: f64, p: [f64; 2]| euclid(c, p) <= r * (1.0 + 1e-12) + 1e-12;
    let (mut c, mut r) = (first, 0.0);
    for i in 1..pts.len() {
        if inside(c, r, pts[i]) {
            continue;
        }
        c = pts[i];
        r = 0.0;
        for j in 0..i {
            if inside(c, r, pts[j]) {
                continue;
            }
            c = midpoint(pts[i], pts[j]);
            r = euclid(pts[i], pts[j]) / 2.0;
            for k in 0..j {
                if !inside(c, r, pts[k]) {
                    (c, r) = circle3(pts[i], pts[j], pts[k]);
                }
            }
        }
    }
    Some((c, r))
}

fn midpoint(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]
}

/// Circle through three points; for (nearly) collinear points, the circle on
/// the farthest pair.
fn circle3(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> ([f64; 2], f64) {
    let (bx, by) = (b[0] - a[0], b[1] - a[1]);
    let (cx, cy) = (c[0] - a[0], c[1] - a[1]);
    let d = 2.0 * (bx * cy - by * cx);
    let scale = (bx * bx + by * by).max(cx * cx + cy * cy);
    if d.abs() <= 1e-14 * scale {
        let pairs = [(a, b), (a, c), (b, c)];
        let (p, q) = pairs
            .into_iter()
            .max_by(|x, y| euclid(x.0, x.1).total_cmp(&euclid(y.0, y.1)))
            .expect("three pairs");
        return (midpoint(p, q), euclid(p, q) / 2.0);
    }
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    let ux = (cy * b2 - by * c2) / d;
    let uy = (bx * c2 - cx * b2) / d;
    let center = [a[0] + ux, a[1] + uy];
    (center, ux.hypot(uy))
}

/// Convex hull (Andrew's monotone chain), counter-clockwise, no repeats.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
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
    hull
}

/// Lattice-ray plane cloud reduced to its plane points and the top point of
/// each ray.
struct LatticeCloud {
    plane: Vec<[f64; 2]>,
    tops: BTreeMap<(i64, i64), f64>,
}

fn split_lattice(cloud: &[ModelPoint]) -> LatticeCloud {
    let mut plane = Vec::new();
    let mut tops: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    for p in cloud {
        match *p {
            ModelPoint::Ray { m, n, h } if h > 0.0 => {
                let e = tops.entry((m, n)).or_insert(0.0);
                *e = e.max(h);
            }
            _ => plane.push(p.base().expect("plane chart")),
        }
    }
    LatticeCloud { plane, tops }
}

fn farthest(space: &ModelSpace, c: ModelPoint, cloud: &[ModelPoint]) -> Result<f64> {
    let mut r = 0.0f64;
    for &p in cloud {
        r = r.max(space.distance(c, p)?);
    }
    Ok(r)
}

/// The circumcenter of a finite cloud.
pub fn barycenter(space: &ModelSpace, cloud: &[ModelPoint]) -> Result<ModelPoint> {
    Ok(min_enclosing_ball(space, cloud)?.0)
}

/// Center and radius of the smallest ball containing `cloud`.
pub fn min_enclosing_ball(space: &ModelSpace, cloud: &[ModelPoint]) -> Result<(ModelPoint, f64)> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let cloud: Vec<ModelPoint> = cloud.iter().map(|&p| space.canonical(p)).collect::<Result<_>>()?;
    match space {
        ModelSpace::EuclideanPlane => {
            let pts: Vec<[f64; 2]> = cloud.iter().map(|p| p.base().expect("plane")).collect();
            let (c, r) = min_enclosing_circle(&convex_hull(&pts), 0).expect("nonempty");
            Ok((ModelPoint::plane(c[0], c[1]), r))
        }
        ModelSpace::LatticeRayPlane => lattice_ball(space, &cloud),
        ModelSpace::MetricTree(_) => {
            let (p, q, d) = diametral_pair(space, &cloud)?;
            if d == 0.0 {
                return Ok((p, 0.0));
            }
            let g = geodesic(space, p.into(), q.into())?;
            Ok((g.point_at(space, d / 2.0)?, d / 2.0))
        }
    }
}

/// In the lattice-ray plane a ray point `(v, h)` lies at distance `h + |c - v|`
/// from a plane center `c`, the distance from `c` to the far side of the disk
/// of radius `h` around `v`. The plane candidate is the enclosing circle of the
/// plane points and these disks (as inscribed polygons); the other candidates
/// sit on a ray, where the radius is `(H_v + R_v) / 2`.
fn lattice_ball(space: &ModelSpace, cloud: &[ModelPoint]) -> Result<(ModelPoint, f64)> {
    let lc = split_lattice(cloud);
    let mut pts = lc.plane.clone();
    for (&(m, n), &h) in &lc.tops {
        for k in 0..DISK_SIDES {
            let th = TAU * k as f64 / DISK_SIDES as f64;
            pts.push([m as f64 + h * th.cos(), n as f64 + h * th.sin()]);
        }
    }
    let hull = convex_hull(&pts);
    let (c, _) = min_enclosing_circle(&hull, 0).expect("nonempty");
    let plane_hull: Vec<ModelPoint> = convex_hull(&lc.plane)
        .into_iter()
        .map(|[x, y]| ModelPoint::plane(x, y))
        .chain(lc.tops.iter().map(|(&(m, n), &h)| ModelPoint::ray(m, n, h)))
        .collect();
    let center = ModelPoint::plane(c[0], c[1]);
    let mut best = (center, farthest(space, center, &plane_hull)?);
    for (&(m, n), &top) in &lc.tops {
        // R_v: farthest reach of the rest of the cloud from the foot v.
        let foot = ModelPoint::plane(m as f64, n as f64);
        let mut reach = 0.0f64;
        for &p in &plane_hull {
            if p.on_ray().map(|(b, _)| b.lattice_index()) == Some(Some((m, n))) {
                continue;
            }
            reach = reach.max(space.distance(foot, p)?);
        }
        let k = (top - reach) / 2.0;
        if k > 0.0 {
            let r = (top + reach) / 2.0;
            if r < best.1 {
                best = (ModelPoint::ray(m, n, k), r);
            }
        }
    }
    Ok(best)
}

/// A pair of cloud points realizing the diameter.
pub fn diametral_pair(space: &ModelSpace, cloud: &[ModelPoint]) -> Result<(ModelPoint, ModelPoint, f64)> {
    let reduced = reduce_for_diameter(space, cloud)?;
    let mut best = (reduced[0], reduced[0], 0.0);
    for (i, &p) in reduced.iter().enumerate() {
        for &q in &reduced[i + 1..] {
            let d = space.distance(p, q)?;
            if d > best.2 {
                best = (p, q, d);
            }
        }
    }
    Ok(best)
}

pub fn diameter(space: &ModelSpace, cloud: &[ModelPoint]) -> Result<f64> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(diametral_pair(space, cloud)?.2)
}

/// Drop points that cannot realize the diameter: interior plane points and
/// ray points below the top of their ray.
fn reduce_for_diameter(space: &ModelSpace, cloud: &[ModelPoint]) -> Result<Vec<ModelPoint>> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    match space {
        ModelSpace::LatticeRayPlane | ModelSpace::EuclideanPlane => {
            let lc = split_lattice(cloud);
            Ok(convex_hull(&lc.plane)
                .into_iter()
                .map(|[x, y]| ModelPoint::plane(x, y))
                .chain(lc.tops.iter().map(|(&(m, n), &h)| ModelPoint::ray(m, n, h)))
                .collect())
        }
        ModelSpace::MetricTree(_) => cloud.iter().map(|&p| space.canonical(p)).collect(),
    }
}
