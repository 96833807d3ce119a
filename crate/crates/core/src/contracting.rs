//! Nearest-point projections onto geodesics and contracting constants.
//!
//! A geodesic `γ` is `D`-contracting when every metric ball disjoint from `γ`
//! projects to a set of diameter at most `D`. In the lattice-ray plane the
//! optimal constant of the line between two rays is the plane distance between
//! their feet; elsewhere it is estimated by sampling balls.

use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::{geodesic, GeodesicPath};
use crate::sampling::{convex_min, linspace, stream_rng};
use crate::space::{euclid, BoundaryPoint, Location, ModelPoint, ModelSpace, EPS_GEOM};

/// Sample spacing along geodesics for slim-triangle and image checks.
pub const PATH_STEP: f64 = 1.0 / 64.0;

/// Nearest point on `γ` to `p`, as `(parameter, foot)`.
pub fn project_point(space: &ModelSpace, gamma: &GeodesicPath, p: ModelPoint) -> Result<(f64, ModelPoint)> {
    let (s, _) = gamma.closest(space, p)?;
    Ok((s, gamma.point_at(space, s)?))
}

/// The limit points on `γ` of projections of a boundary point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSet {
    pub geodesic: GeodesicPath,
    pub source: BoundaryPoint,
    pub limit_points: Vec<f64>,
    pub barycenter_param: f64,
}

impl ProjectionSet {
    pub fn diameter(&self) -> f64 {
        let (lo, hi) = minmax(&self.limit_points);
        hi - lo
    }
}

fn minmax(xs: &[f64]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    })
}

fn check_projectable(space: &ModelSpace, gamma: &GeodesicPath, b: BoundaryPoint) -> Result<()> {
    space.check_boundary(b)?;
    if gamma.has_ideal_endpoint(b) {
        return Err(Error::EndpointProjection(b));
    }
    Ok(())
}

/// Parameter of the projection of `b` onto `γ`.
///
/// In the lattice-ray plane, once the ray of `b` is above every height `γ`
/// uses on it, its points all project to the projection of the foot, so a
/// single evaluation is exact. Other spaces use [`boundary_param_sweep`].
pub fn boundary_param(space: &ModelSpace, gamma: &GeodesicPath, b: BoundaryPoint) -> Result<f64> {
    check_projectable(space, gamma, b)?;
    match space {
        ModelSpace::LatticeRayPlane => {
            let h = gamma.max_height_on(b) + 1.0;
            Ok(gamma.closest(space, b.ray_point(h))?.0)
        }
        _ => boundary_param_sweep(space, gamma, b),
    }
}

/// Projects the ray of `b` at doubling heights until the foot parameter moves
/// by at most [`EPS_GEOM`].
pub fn boundary_param_sweep(space: &ModelSpace, gamma: &GeodesicPath, b: BoundaryPoint) -> Result<f64> {
    check_projectable(space, gamma, b)?;
    let mut h = gamma.max_height_on(b) + 1.0;
    let mut prev = gamma.closest(space, b.ray_point(h))?.0;
    for _ in 0..64 {
        h *= 2.0;
        let s = gamma.closest(space, b.ray_point(h))?.0;
        if (s - prev).abs() <= EPS_GEOM {
            return Ok(s);
        }
        prev = s;
    }
    Err(Error::Degenerate(format!("projection of {b} did not stabilize")))
}

pub fn project_boundary(space: &ModelSpace, gamma: &GeodesicPath, b: BoundaryPoint) -> Result<ProjectionSet> {
    let s = boundary_param(space, gamma, b)?;
    Ok(ProjectionSet {
        geodesic: gamma.clone(),
        source: b,
        limit_points: vec![s],
        barycenter_param: s,
    })
}

/// Parameter of the projection of a point or boundary point onto `γ`.
pub fn location_param(space: &ModelSpace, gamma: &GeodesicPath, l: Location) -> Result<f64> {
    match l {
        Location::Point(p) => Ok(gamma.closest(space, p)?.0),
        Location::Ideal(b) => boundary_param(space, gamma, b),
    }
}

/// A claimed contracting constant with the configuration that realizes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractingCertificate {
    #[serde(rename = "D")]
    pub d: f64,
    pub mode: CertificateMode,
    pub witness: Witness,
    pub seed: Option<u64>,
    pub window: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CertificateMode {
    Exact,
    Sampled { sample_count: usize, window: f64 },
}

/// The ball (or pair of points) with the widest projection found.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Ball {
        center: ModelPoint,
        radius: f64,
        projection: [f64; 2],
        diameter: f64,
    },
    Pair {
        x: ModelPoint,
        y: ModelPoint,
        projection: [f64; 2],
        diameter: f64,
    },
}

impl Witness {
    pub fn diameter(&self) -> f64 {
        match *self {
            Witness::Ball { diameter, .. } | Witness::Pair { diameter, .. } => diameter,
        }
    }
}

fn lattice_line_feet(space: &ModelSpace, gamma: &GeodesicPath) -> Result<([f64; 2], [f64; 2])> {
    match (space, gamma.from(), gamma.to()) {
        (
            ModelSpace::LatticeRayPlane,
            Location::Ideal(BoundaryPoint::Lattice { m, n }),
            Location::Ideal(BoundaryPoint::Lattice { m: s, n: t }),
        ) => Ok(([m as f64, n as f64], [s as f64, t as f64])),
        _ => Err(Error::NotBiInfiniteLattice),
    }
}

/// The optimal constant of a bi-infinite geodesic between two lattice rays.
///
/// The witness is the largest ball around a plane point on the perpendicular
/// bisector, at distance `D/2 + 1` from the segment, which is disjoint from the
/// geodesic and projects onto the whole segment.
pub fn contracting_constant_exact(space: &ModelSpace, gamma: &GeodesicPath) -> Result<ContractingCertificate> {
    let (a, b) = lattice_line_feet(space, gamma)?;
    let d = euclid(a, b);
    let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
    let normal = [(b[1] - a[1]) / d, -(b[0] - a[0]) / d];
    let offset = d / 2.0 + 1.0;
    let center = ModelPoint::plane(mid[0] + normal[0] * offset, mid[1] + normal[1] * offset);
    let radius = gamma.distance_to(space, center)? - EPS_GEOM;
    let witness = sampled_ball(space, gamma, center, radius, 64, 0.0)?;
    debug_assert!(witness.diameter() <= d + EPS_GEOM);
    Ok(ContractingCertificate {
        d,
        mode: CertificateMode::Exact,
        witness,
        seed: None,
        window: None,
    })
}

/// Parameters for [`contracting_constant_sampled`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Half-width of the square of ball centers around the middle of `γ`
    /// (plane spaces), or the largest ray height sampled (trees).
    pub window: f64,
    pub balls: usize,
    pub samples_per_ball: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            window: 8.0,
            balls: 10_000,
            samples_per_ball: 32,
            seed: 0,
        }
    }
}

/// Projection extent of the ball of `radius` around `center`, sampled at the
/// center and `k` boundary points starting at angle `phase`.
///
/// Points on lattice rays inside a plane ball project like their feet, so the
/// plane disk carries the whole projection.
fn sampled_ball(
    space: &ModelSpace,
    gamma: &GeodesicPath,
    center: ModelPoint,
    radius: f64,
    k: usize,
    phase: f64,
) -> Result<Witness> {
    let pts = ball_points(space, center, radius, k, phase)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for q in pts {
        let s = gamma.closest(space, q)?.0;
        lo = lo.min(s);
        hi = hi.max(s);
    }
    Ok(Witness::Ball {
        center,
        radius,
        projection: [lo, hi],
        diameter: hi - lo,
    })
}

fn ball_points(space: &ModelSpace, center: ModelPoint, radius: f64, k: usize, phase: f64) -> Result<Vec<ModelPoint>> {
    let mut pts = vec![center];
    match space {
        ModelSpace::LatticeRayPlane | ModelSpace::EuclideanPlane => {
            let c = center.base().expect("plane chart");
            let plane_r = radius - center.lift();
            if plane_r > 0.0 {
                for j in 0..k {
                    let th = phase + TAU * j as f64 / k as f64;
                    pts.push(ModelPoint::plane(c[0] + plane_r * th.cos(), c[1] + plane_r * th.sin()));
                }
            }
        }
        ModelSpace::MetricTree(t) => {
            // Vertices inside the ball and the points where the ball's
            // boundary crosses each edge and ray.
            for v in 0..t.vertex_count() {
                if t.to_vertex(center, v) <= radius {
                    pts.push(ModelPoint::TreeVertex { v });
                }
            }
            for &(u, v, len) in t.edges() {
                for tt in linspace(0.0, len, k.max(2)) {
                    let q = t.canonical(ModelPoint::TreeEdge { u, v, t: tt })?;
                    if t.distance_canonical(center, q) <= radius {
                        pts.push(q);
                    }
                }
            }
            for &leaf in t.ends() {
                let base = t.to_vertex(center, leaf);
                let h = match center {
                    ModelPoint::TreeRay { leaf: l, h } if l == leaf => h + radius,
                    _ => radius - base,
                };
                if h > 0.0 {
                    pts.push(ModelPoint::TreeRay { leaf, h });
                }
            }
        }
    }
    Ok(pts)
}

/// Plane point in the middle of the finite part of `γ`.
fn plane_middle(space: &ModelSpace, gamma: &GeodesicPath) -> Result<[f64; 2]> {
    if let Some((a, b)) = gamma.plane_segment() {
        return Ok([(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]);
    }
    let (lo, hi) = gamma.finite_range();
    Ok(gamma.point_at(space, (lo + hi) / 2.0)?.base().expect("plane chart"))
}

fn ball_centers(space: &ModelSpace, gamma: &GeodesicPath, cfg: &SamplerConfig) -> Result<Vec<ModelPoint>> {
    match space {
        ModelSpace::LatticeRayPlane | ModelSpace::EuclideanPlane => {
            let c = plane_middle(space, gamma)?;
            let side = ((cfg.balls as f64).sqrt().ceil() as usize).max(2);
            let w = cfg.window;
            let xs: Vec<f64> = linspace(c[0] - w, c[0] + w, side).collect();
            let ys: Vec<f64> = linspace(c[1] - w, c[1] + w, side).collect();
            Ok(xs
                .iter()
                .flat_map(|&x| ys.iter().map(move |&y| ModelPoint::plane(x, y)))
                .collect())
        }
        ModelSpace::MetricTree(t) => {
            let per = (cfg.balls / (t.edges().len() + t.ends().len()).max(1)).clamp(2, 64);
            let mut out: Vec<ModelPoint> = (0..t.vertex_count()).map(|v| ModelPoint::TreeVertex { v }).collect();
            for &(u, v, len) in t.edges() {
                for tt in linspace(0.0, len, per + 2).skip(1).take(per) {
                    out.push(ModelPoint::TreeEdge { u, v, t: tt });
                }
            }
            for &leaf in t.ends() {
                for h in linspace(0.0, cfg.window, per + 1).skip(1) {
                    out.push(ModelPoint::TreeRay { leaf, h });
                }
            }
            Ok(out)
        }
    }
}

/// Largest projection diameter over sampled balls disjoint from `γ`.
///
/// Each center carries the largest disjoint ball, radius `d(center, γ) - ε`.
pub fn contracting_constant_sampled(
    space: &ModelSpace,
    gamma: &GeodesicPath,
    cfg: &SamplerConfig,
) -> Result<ContractingCertificate> {
    let centers = ball_centers(space, gamma, cfg)?;
    let results: Vec<Option<Witness>> = centers
        .par_iter()
        .enumerate()
        .map(|(i, &c)| {
            let dist = gamma.distance_to(space, c)?;
            let radius = dist - EPS_GEOM;
            if radius <= EPS_GEOM {
                return Ok(None);
            }
            let phase = stream_rng(cfg.seed, i as u64).gen::<f64>() * TAU;
            sampled_ball(space, gamma, c, radius, cfg.samples_per_ball, phase).map(Some)
        })
        .collect::<Result<_>>()?;
    let best = results
        .into_iter()
        .flatten()
        .reduce(|a, b| if b.diameter() > a.diameter() { b } else { a })
        .ok_or(Error::NoDisjointBall)?;
    Ok(ContractingCertificate {
        d: best.diameter(),
        mode: CertificateMode::Sampled {
            sample_count: centers.len(),
            window: cfg.window,
        },
        witness: best,
        seed: Some(cfg.seed),
        window: Some(cfg.window),
    })
}

/// The pair phrasing of contraction: the largest `d(π x, π y)` over sampled
/// pairs with `d(x, y) < d(x, γ)`. Used as a secondary check on the ball
/// phrasing.
pub fn contracting_constant_pairs(
    space: &ModelSpace,
    gamma: &GeodesicPath,
    cfg: &SamplerConfig,
) -> Result<ContractingCertificate> {
    let centers = ball_centers(space, gamma, cfg)?;
    let results: Vec<Option<Witness>> = centers
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let dist = gamma.distance_to(space, x)?;
            if dist <= 2.0 * EPS_GEOM {
                return Ok(None);
            }
            let mut rng = stream_rng(cfg.seed, i as u64);
            let sx = gamma.closest(space, x)?.0;
            let mut best: Option<Witness> = None;
            let phase = rng.gen::<f64>() * TAU;
            for y in ball_points(space, x, dist - EPS_GEOM, cfg.samples_per_ball, phase)? {
                if space.distance(x, y)? >= dist {
                    continue;
                }
                let sy = gamma.closest(space, y)?.0;
                let w = Witness::Pair {
                    x,
                    y,
                    projection: [sx.min(sy), sx.max(sy)],
                    diameter: (sx - sy).abs(),
                };
                if best.is_none_or(|b| w.diameter() > b.diameter()) {
                    best = Some(w);
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let best = results
        .into_iter()
        .flatten()
        .reduce(|a, b| if b.diameter() > a.diameter() { b } else { a })
        .ok_or(Error::NoDisjointBall)?;
    Ok(ContractingCertificate {
        d: best.diameter(),
        mode: CertificateMode::Sampled {
            sample_count: centers.len(),
            window: cfg.window,
        },
        witness: best,
        seed: Some(cfg.seed),
        window: Some(cfg.window),
    })
}

/// Sampler used to certify pairs in spaces without a closed form.
pub(crate) fn quick_sampler() -> SamplerConfig {
    SamplerConfig {
        window: 4.0,
        balls: 64,
        samples_per_ball: 8,
        seed: 0,
    }
}

/// Contracting constant of the line between two boundary points: exact in the
/// lattice-ray plane, sampled otherwise.
pub fn pair_constant(space: &ModelSpace, a: BoundaryPoint, b: BoundaryPoint) -> Result<f64> {
    match (space, a, b) {
        (ModelSpace::LatticeRayPlane, BoundaryPoint::Lattice { m, n }, BoundaryPoint::Lattice { m: s, n: t }) => {
            space.check_boundary(a)?;
            if (m, n) == (s, t) {
                return Err(Error::SameEndpoints);
            }
            Ok(euclid([m as f64, n as f64], [s as f64, t as f64]))
        }
        _ => {
            let g = crate::path::line(space, a, b)?;
            Ok(contracting_constant_sampled(space, &g, &quick_sampler())?.d)
        }
    }
}

/// Certificate for the line between two boundary points.
pub fn certify_pair(space: &ModelSpace, a: BoundaryPoint, b: BoundaryPoint) -> Result<ContractingCertificate> {
    let g = crate::path::line(space, a, b)?;
    match space {
        ModelSpace::LatticeRayPlane => contracting_constant_exact(space, &g),
        _ => contracting_constant_sampled(space, &g, &quick_sampler()),
    }
}

/// Outcome of a slim-triangle check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlimReport {
    pub holds: bool,
    pub worst_violation: f64,
    /// Parameter on the `(a, c)` side of the projection of `b`.
    pub projection_param: f64,
}

fn distinct(space: &ModelSpace, a: Location, b: Location) -> Result<bool> {
    Ok(match (a, b) {
        (Location::Ideal(x), Location::Ideal(y)) => x != y,
        (Location::Point(p), Location::Point(q)) => !space.same_point(p, q)?,
        _ => true,
    })
}

/// Largest distance from the `(a, b)` side to `(a, p) ∪ (p, b)`, where `p` is
/// the projection of `b` onto the `(a, c)` side.
pub fn slim_violation(space: &ModelSpace, a: Location, b: Location, c: Location) -> Result<(f64, f64)> {
    let a = space.check_location(a)?;
    let b = space.check_location(b)?;
    let c = space.check_location(c)?;
    for (x, y) in [(a, b), (b, c), (a, c)] {
        if !distinct(space, x, y)? {
            return Err(Error::Degenerate(format!("repeated vertex {x}")));
        }
    }
    let alpha = geodesic(space, a, c)?;
    let sp = location_param(space, &alpha, b)?;
    let p = alpha.point_at(space, sp)?;
    let side = geodesic(space, a, b)?;
    let mut targets = Vec::with_capacity(2);
    for (x, y) in [(a, Location::Point(p)), (Location::Point(p), b)] {
        match geodesic(space, x, y) {
            Ok(g) => targets.push(g),
            Err(Error::SameEndpoints) => {}
            Err(e) => return Err(e),
        }
    }
    let mut worst = 0.0f64;
    for s in side.sample_params(PATH_STEP, 1.0) {
        let q = side.point_at(space, s)?;
        let mut d = f64::INFINITY;
        for t in &targets {
            d = d.min(t.distance_to(space, q)?);
        }
        if targets.is_empty() {
            d = space.distance(q, p)?;
        }
        worst = worst.max(d);
    }
    Ok((worst, sp))
}

pub fn verify_slim_triangle(
    space: &ModelSpace,
    a: Location,
    b: Location,
    c: Location,
    delta_candidate: f64,
) -> Result<SlimReport> {
    let (worst, sp) = slim_violation(space, a, b, c)?;
    Ok(SlimReport {
        holds: worst <= delta_candidate,
        worst_violation: worst,
        projection_param: sp,
    })
}

/// Diagnostics of a bounded-geodesic-image check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub holds: bool,
    pub projection_diameter: f64,
    pub min_distance: f64,
}

impl ImageReport {
    /// The least `B` for which this configuration satisfies the property.
    pub fn required_bound(&self) -> f64 {
        self.projection_diameter.min(self.min_distance)
    }
}

/// Projection interval of `β` onto `γ`, in `γ`'s parameters.
pub fn projection_interval(space: &ModelSpace, gamma: &GeodesicPath, beta: &GeodesicPath) -> Result<(f64, f64)> {
    for end in [beta.from(), beta.to()] {
        if let Location::Ideal(b) = end {
            if gamma.has_ideal_endpoint(b) {
                return Ok((f64::NEG_INFINITY, f64::INFINITY));
            }
        }
    }
    let mut params = Vec::new();
    for s in beta.sample_params(PATH_STEP, 1.0) {
        params.push(gamma.closest(space, beta.point_at(space, s)?)?.0);
    }
    for end in [beta.from(), beta.to()] {
        if let Location::Ideal(b) = end {
            params.push(boundary_param(space, gamma, b)?);
        }
    }
    Ok(minmax(&params))
}

/// Smallest distance between `β` and `γ`. Distance to a convex set is convex
/// along a geodesic, so a bracketed golden-section search finds it.
pub fn min_distance(space: &ModelSpace, gamma: &GeodesicPath, beta: &GeodesicPath) -> Result<f64> {
    let (flo, fhi) = beta.finite_range();
    let (lo, hi) = beta.param_range();
    let tail = 1.0 + (fhi - flo);
    let lo = if lo.is_finite() { lo } else { flo - tail };
    let hi = if hi.is_finite() { hi } else { fhi + tail };
    let mut err = None;
    let (_, d) = convex_min(lo, hi, |s| {
        match beta.point_at(space, s).and_then(|q| gamma.distance_to(space, q)) {
            Ok(d) => d,
            Err(e) => {
                err.get_or_insert(e);
                f64::INFINITY
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(d),
    }
}

/// Checks that either `β` projects to a set of diameter at most `B` or comes
/// within `B` of `γ`.
pub fn verify_bounded_geodesic_image(
    space: &ModelSpace,
    gamma: &GeodesicPath,
    beta: &GeodesicPath,
    b_candidate: f64,
) -> Result<ImageReport> {
    let (lo, hi) = projection_interval(space, gamma, beta)?;
    let diam = hi - lo;
    let dist = min_distance(space, gamma, beta)?;
    Ok(ImageReport {
        holds: diam <= b_candidate || dist < b_candidate,
        projection_diameter: diam,
        min_distance: dist,
    })
}

/// Given two sides `(a, b)` and `(b, c)` certified at most `d_two_sides`,
/// returns a sampled certificate for the third side `(a, c)`.
pub fn verify_contracting_triangles(
    space: &ModelSpace,
    a: BoundaryPoint,
    b: BoundaryPoint,
    c: BoundaryPoint,
    d_two_sides: f64,
    cfg: &SamplerConfig,
) -> Result<ContractingCertificate> {
    for (x, y) in [(a, b), (b, c)] {
        let k = pair_constant(space, x, y)?;
        if k > d_two_sides + EPS_GEOM {
            return Err(Error::UncertifiedSide {
                a: x.to_string(),
                b: y.to_string(),
                constant: k,
                bound: d_two_sides,
            });
        }
    }
    let g = crate::path::line(space, a, c)?;
    contracting_constant_sampled(space, &g, cfg)
}

/// Hausdorff distance between two paths, estimated on samples of both.
pub fn hausdorff_sampled(space: &ModelSpace, g: &GeodesicPath, h: &GeodesicPath) -> Result<f64> {
    let mut worst = 0.0f64;
    for (x, y) in [(g, h), (h, g)] {
        for s in x.sample_params(PATH_STEP * 4.0, 2.0) {
            worst = worst.max(y.distance_to(space, x.point_at(space, s)?)?);
        }
    }
    Ok(worst)
}
