//! Extension of a boundary map to a map of spaces.
//!
//! Every `D`-triangle of boundary points has a coarse center: the barycenter
//! of its `E_K` set, the points within `K` of all three sides. The extension
//! `h` sends `x` to the barycenter of the centers of the image triangles of
//! all triangles whose center lies within `R` of `x`.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{cross_ratio_value, stratum_level, BoundaryMap};
use crate::contracting::{boundary_param, pair_constant};
use crate::enclosing::{diameter, min_enclosing_ball};
use crate::error::{Error, Result};
use crate::path::{geodesic, line, GeodesicPath};
use crate::sampling::stream_rng;
use crate::space::{BoundaryPoint, LatticeBox, LatticeIsometry, Location, ModelPoint, ModelSpace, EPS_GEOM};
use crate::tables::{triangle_classes, TableSet, SAFETY_FACTOR};

/// Grid pitch of `E_K` sets as a fraction of `K`.
pub const EK_PITCH_DIVISOR: f64 = 16.0;
/// Refinement may move the barycenter by at most this fraction of `K`.
pub const EK_REFINEMENT_LIMIT: f64 = 1.0 / 8.0;

/// Sampled `E_K` set of a triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EkSet {
    /// The triangle, sorted.
    pub triangle: [BoundaryPoint; 3],
    #[serde(rename = "K")]
    pub k: f64,
    pub pitch: f64,
    pub samples: Vec<ModelPoint>,
    pub barycenter: ModelPoint,
    /// Radius of the smallest ball around the samples.
    pub bounding_radius: f64,
    #[serde(skip)]
    sides: Vec<GeodesicPath>,
}

impl EkSet {
    /// Exact membership: within `K` of all three sides.
    pub fn contains(&self, space: &ModelSpace, p: ModelPoint) -> Result<bool> {
        within_all(space, &self.sides, p, self.k)
    }
}

fn within_all(space: &ModelSpace, sides: &[GeodesicPath], p: ModelPoint, k: f64) -> Result<bool> {
    for s in sides {
        if s.distance_to(space, p)? > k + EPS_GEOM {
            return Ok(false);
        }
    }
    Ok(true)
}

fn sorted3(t: &[BoundaryPoint; 3]) -> Result<[BoundaryPoint; 3]> {
    let mut t = *t;
    t.sort();
    if t[0] == t[1] || t[1] == t[2] {
        return Err(Error::DuplicatePoints);
    }
    Ok(t)
}

fn ek_cloud(
    space: &ModelSpace,
    t: &[BoundaryPoint; 3],
    sides: &[GeodesicPath],
    k: f64,
    pitch: f64,
) -> Result<Vec<ModelPoint>> {
    let mut cloud = Vec::new();
    match space {
        ModelSpace::LatticeRayPlane => {
            // Grid anchored at the first vertex so that it moves with lattice translations.
            let bases: Vec<[f64; 2]> = t.iter().map(|b| b.foot().base().expect("lattice")).collect();
            let anchor = bases[0];
            let rel = |i: usize| bases.iter().map(move |b| b[i] - anchor[i]);
            let lo = [
                rel(0).fold(f64::INFINITY, f64::min) - k,
                rel(1).fold(f64::INFINITY, f64::min) - k,
            ];
            let hi = [
                rel(0).fold(f64::NEG_INFINITY, f64::max) + k,
                rel(1).fold(f64::NEG_INFINITY, f64::max) + k,
            ];
            let (i0, i1) = ((lo[0] / pitch).ceil() as i64, (hi[0] / pitch).floor() as i64);
            let (j0, j1) = ((lo[1] / pitch).ceil() as i64, (hi[1] / pitch).floor() as i64);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    let p = ModelPoint::plane(anchor[0] + i as f64 * pitch, anchor[1] + j as f64 * pitch);
                    if within_all(space, sides, p, k)? {
                        cloud.push(p);
                    }
                }
            }
            let steps = (k / pitch + EPS_GEOM).floor() as i64;
            let (m0, m1) = ((anchor[0] + lo[0]).ceil() as i64, (anchor[0] + hi[0]).floor() as i64);
            let (n0, n1) = ((anchor[1] + lo[1]).ceil() as i64, (anchor[1] + hi[1]).floor() as i64);
            for m in m0..=m1 {
                for n in n0..=n1 {
                    for j in 1..=steps {
                        let p = ModelPoint::ray(m, n, j as f64 * pitch);
                        if !within_all(space, sides, p, k)? {
                            break;
                        }
                        cloud.push(p);
                    }
                }
            }
        }
        ModelSpace::MetricTree(_) => {
            // The sides meet at the median; walk out from it along each side.
            let median_s = boundary_param(space, &sides[0], t[2])?;
            let median = sides[0].point_at(space, median_s)?;
            cloud.push(median);
            let steps = (k / pitch + EPS_GEOM).floor() as i64;
            for side in sides {
                let (s0, _) = side.closest(space, median)?;
                for j in 1..=steps {
                    for s in [s0 - j as f64 * pitch, s0 + j as f64 * pitch] {
                        let p = side.point_at(space, s)?;
                        if within_all(space, sides, p, k)? {
                            cloud.push(p);
                        }
                    }
                }
            }
        }
        ModelSpace::EuclideanPlane => return Err(Error::NoBoundary(space.kind_name())),
    }
    Ok(cloud)
}

/// Grid-sampled `E_K` set of `triangle`. The barycenter is recomputed at half
/// the pitch and must move by less than `K / 8`.
pub fn ek_set(space: &ModelSpace, triangle: &[BoundaryPoint; 3], k: f64, pitch: f64) -> Result<EkSet> {
    if !(k > 0.0 && pitch > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "K and pitch must be positive, got {k} and {pitch}"
        )));
    }
    let t = sorted3(triangle)?;
    let sides = vec![
        line(space, t[0], t[1])?,
        line(space, t[1], t[2])?,
        line(space, t[0], t[2])?,
    ];
    let cloud = ek_cloud(space, &t, &sides, k, pitch)?;
    if cloud.is_empty() {
        return Err(Error::EmptyEkSet {
            triangle: format!("({}, {}, {})", t[0], t[1], t[2]),
            k,
        });
    }
    let (center, radius) = min_enclosing_ball(space, &cloud)?;
    let fine = ek_cloud(space, &t, &sides, k, pitch / 2.0)?;
    let (fine_center, _) = min_enclosing_ball(space, &fine)?;
    let moved = space.distance(center, fine_center)?;
    let limit = k * EK_REFINEMENT_LIMIT;
    if moved >= limit {
        return Err(Error::RefinementUnstable { moved, limit });
    }
    Ok(EkSet {
        triangle: t,
        k,
        pitch,
        samples: cloud,
        barycenter: center,
        bounding_radius: radius,
        sides,
    })
}

/// A triangle whose barycenter lies near a query point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preimage {
    pub triangle: [BoundaryPoint; 3],
    pub barycenter: ModelPoint,
    pub distance: f64,
}

/// `π`: sends a `D`-triangle to the barycenter of its `E_K` set, with
/// `K = B_D + δ_D`. Barycenters are cached per translation class.
#[derive(Debug)]
pub struct BarycenterMap {
    space: ModelSpace,
    d: f64,
    k: f64,
    cache: RwLock<HashMap<[BoundaryPoint; 3], ModelPoint>>,
    classes: OnceLock<Vec<([BoundaryPoint; 3], ModelPoint)>>,
}

impl BarycenterMap {
    /// Reads `K` from `tables`.
    pub fn new(space: &ModelSpace, d: f64, tables: &TableSet) -> Result<Self> {
        Ok(Self::with_k(space, d, tables.k(d)?))
    }

    pub fn with_k(space: &ModelSpace, d: f64, k: f64) -> Self {
        BarycenterMap {
            space: space.clone(),
            d,
            k,
            cache: RwLock::new(HashMap::new()),
            classes: OnceLock::new(),
        }
    }

    pub fn space(&self) -> &ModelSpace {
        &self.space
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn pitch(&self) -> f64 {
        self.k / EK_PITCH_DIVISOR
    }

    /// The first pair of `t` whose constant exceeds `D`.
    pub fn violation(&self, t: &[BoundaryPoint; 3]) -> Result<Option<(BoundaryPoint, BoundaryPoint, f64)>> {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[0], t[2])] {
            let c = pair_constant(&self.space, a, b)?;
            if c > self.d + EPS_GEOM {
                return Ok(Some((a, b, c)));
            }
        }
        Ok(None)
    }

    fn normalize(&self, t: &[BoundaryPoint; 3]) -> Result<([BoundaryPoint; 3], LatticeIsometry)> {
        let t = sorted3(t)?;
        Ok(match t[0] {
            BoundaryPoint::Lattice { m, n } => {
                let g = LatticeIsometry::translation(m, n);
                let gi = g.inverse();
                (t.map(|b| b.transformed(&gi)), g)
            }
            _ => (t, LatticeIsometry::IDENTITY),
        })
    }

    pub fn ek(&self, t: &[BoundaryPoint; 3]) -> Result<EkSet> {
        ek_set(&self.space, t, self.k, self.pitch())
    }

    pub fn pi(&self, t: [BoundaryPoint; 3]) -> Result<ModelPoint> {
        let (key, g) = self.normalize(&t)?;
        let lattice = matches!(self.space, ModelSpace::LatticeRayPlane);
        // Lattice constants are exact and cheap; elsewhere check once per class.
        if lattice {
            self.check(&t)?;
        }
        if let Some(p) = self.cache.read().expect("cache").get(&key) {
            return Ok(p.transformed(&g));
        }
        if !lattice {
            self.check(&t)?;
        }
        let p = self.ek(&key)?.barycenter;
        self.cache.write().expect("cache").insert(key, p);
        Ok(p.transformed(&g))
    }

    fn check(&self, t: &[BoundaryPoint; 3]) -> Result<()> {
        match self.violation(t)? {
            Some((a, b, c)) => Err(Error::UncertifiedSide {
                a: a.to_string(),
                b: b.to_string(),
                constant: c,
                bound: self.d,
            }),
            None => Ok(()),
        }
    }

    /// Computes the barycenter in place, without the cache or translation normalization.
    pub fn pi_uncached(&self, t: [BoundaryPoint; 3]) -> Result<ModelPoint> {
        self.check(&t)?;
        Ok(self.ek(&t)?.barycenter)
    }

    /// `D`-triangle classes with their barycenters.
    pub fn classes(&self) -> Result<&[([BoundaryPoint; 3], ModelPoint)]> {
        if let Some(c) = self.classes.get() {
            return Ok(c);
        }
        let list = triangle_classes(&self.space, self.d)?
            .into_par_iter()
            .map(|t| Ok((t, self.pi(t)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.classes.get_or_init(|| list))
    }

    /// All `D`-triangles whose barycenter lies in the closed ball `B(x, r)`,
    /// optionally restricted to triangles with every vertex in `window`.
    pub fn preimage(&self, x: ModelPoint, r: f64, window: Option<&LatticeBox>) -> Result<Vec<Preimage>> {
        let x = self.space.canonical(x)?;
        let mut out = Vec::new();
        match self.space {
            ModelSpace::LatticeRayPlane => {
                let bx = x.base().expect("lattice point");
                for &(t, beta) in self.classes()? {
                    let bb = beta.base().expect("lattice point");
                    // d(x, y) ≥ |base(x) − base(y)|, so only translations in this disc qualify.
                    let c = [bx[0] - bb[0], bx[1] - bb[1]];
                    for m in (c[0] - r).ceil() as i64..=(c[0] + r).floor() as i64 {
                        let dm = m as f64 - c[0];
                        let span = (r * r - dm * dm).max(0.0).sqrt();
                        for n in (c[1] - span).ceil() as i64..=(c[1] + span).floor() as i64 {
                            let g = LatticeIsometry::translation(m, n);
                            let y = beta.transformed(&g);
                            let dist = self.space.distance(x, y)?;
                            if dist > r + EPS_GEOM {
                                continue;
                            }
                            let tri = t.map(|b| b.transformed(&g));
                            if let Some(w) = window {
                                if !tri.iter().all(|b| {
                                    let (p, q) = b.lattice_index().expect("lattice");
                                    w.contains(p, q)
                                }) {
                                    continue;
                                }
                            }
                            out.push(Preimage {
                                triangle: tri,
                                barycenter: y,
                                distance: dist,
                            });
                        }
                    }
                }
            }
            _ => {
                for &(t, beta) in self.classes()? {
                    let dist = self.space.distance(x, beta)?;
                    if dist <= r + EPS_GEOM {
                        out.push(Preimage {
                            triangle: t,
                            barycenter: beta,
                            distance: dist,
                        });
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(Error::EmptyPreimage { radius: r });
        }
        Ok(out)
    }
}

/// `π⁻¹(B(x, r))` for the barycenter map at level `D` of `space`.
pub fn preimage_triangles(
    space: &ModelSpace,
    x: ModelPoint,
    r: f64,
    d: f64,
    window: Option<&LatticeBox>,
) -> Result<Vec<Preimage>> {
    let pi = BarycenterMap::new(space, d, TableSet::shared(space)?)?;
    pi.preimage(x, r, window)
}

/// Which of the three flipped cross-ratios was smallest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flip {
    /// `[a, b, c, d]`
    Abcd,
    /// `[a, c, b, d]`
    Acbd,
    /// `[a, c, d, b]`
    Acdb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipChoice {
    pub which: Flip,
    pub value: f64,
    pub values: [f64; 3],
    pub bound: f64,
}

/// Magnitudes of `[a, b, c, d]`, `[a, c, b, d]` and `[a, c, d, b]`.
pub fn small_flip_values(space: &ModelSpace, t: [BoundaryPoint; 4]) -> Result<[f64; 3]> {
    let [a, b, c, d] = t;
    Ok([
        cross_ratio_value(space, a, b, c, d)?.abs(),
        cross_ratio_value(space, a, c, b, d)?.abs(),
        cross_ratio_value(space, a, c, d, b)?.abs(),
    ])
}

/// The smallest of the three flipped cross-ratios of a `D`-tuple, checked
/// against the flip bound `C₁` of the shared tables.
pub fn small_flip_select(space: &ModelSpace, t: [BoundaryPoint; 4], d: f64) -> Result<FlipChoice> {
    let level = stratum_level(space, &t)?;
    if level > d + EPS_GEOM {
        return Err(Error::UncertifiedSide {
            a: format!("{:?}", t),
            b: String::new(),
            constant: level,
            bound: d,
        });
    }
    let bound = TableSet::shared(space)?.flips(d)?;
    let values = small_flip_values(space, t)?;
    let (i, &value) = values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("three values");
    if value > bound {
        return Err(Error::FlipBound {
            tuple: format!("({}, {}, {}, {})", t[0], t[1], t[2], t[3]),
            smallest: value,
            bound,
        });
    }
    Ok(FlipChoice {
        which: [Flip::Abcd, Flip::Acbd, Flip::Acdb][i],
        value,
        values,
        bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct PointKey(u8, i64, i64, u64, u64);

fn point_key(p: ModelPoint) -> PointKey {
    match p {
        ModelPoint::Plane { x, y } => PointKey(0, 0, 0, x.to_bits(), y.to_bits()),
        ModelPoint::Ray { m, n, h } => PointKey(1, m, n, h.to_bits(), 0),
        ModelPoint::TreeVertex { v } => PointKey(2, v as i64, 0, 0, 0),
        ModelPoint::TreeEdge { u, v, t } => PointKey(3, u as i64, v as i64, t.to_bits(), 0),
        ModelPoint::TreeRay { leaf, h } => PointKey(4, leaf as i64, 0, h.to_bits(), 0),
    }
}

/// One evaluation of the extended map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub x: ModelPoint,
    pub h: ModelPoint,
    /// Diameter of `Π(x)`, the image barycenters.
    pub pi_diameter: f64,
    pub triangle_count: usize,
}

/// Chart name and coordinates of a point, as written to CSV.
pub fn chart_coords(p: ModelPoint) -> (&'static str, Vec<f64>) {
    let c = match p {
        ModelPoint::Plane { x, y } => vec![x, y],
        ModelPoint::Ray { m, n, h } => vec![m as f64, n as f64, h],
        ModelPoint::TreeVertex { v } => vec![v as f64],
        ModelPoint::TreeEdge { u, v, t } => vec![u as f64, v as f64, t],
        ModelPoint::TreeRay { leaf, h } => vec![leaf as f64, h],
    };
    (p.chart_name(), c)
}

/// The extension `h` of a boundary map.
#[derive(Debug)]
pub struct ExtendedMap {
    f: BoundaryMap,
    r: f64,
    pix: Arc<BarycenterMap>,
    piy: Arc<BarycenterMap>,
    cache: RwLock<HashMap<PointKey, Evaluation>>,
}

/// Extends `f` using `D`-triangles in `X`, `D'`-triangles in `Y` and radius `R`.
pub fn extend(
    space_x: &ModelSpace,
    space_y: &ModelSpace,
    f: &BoundaryMap,
    d: f64,
    d_prime: f64,
    r: f64,
) -> Result<ExtendedMap> {
    let pix = BarycenterMap::new(space_x, d, TableSet::shared(space_x)?)?;
    let piy = BarycenterMap::new(space_y, d_prime, TableSet::shared(space_y)?)?;
    Ok(ExtendedMap::from_parts(f.clone(), Arc::new(pix), Arc::new(piy), r))
}

impl ExtendedMap {
    pub fn from_parts(f: BoundaryMap, pix: Arc<BarycenterMap>, piy: Arc<BarycenterMap>, r: f64) -> Self {
        ExtendedMap {
            f,
            r,
            pix,
            piy,
            cache: RwLock::new(HashMap::new()),
        }
    }

    /// The same construction at another radius, sharing barycenter caches.
    pub fn with_radius(&self, r: f64) -> Self {
        Self::from_parts(self.f.clone(), self.pix.clone(), self.piy.clone(), r)
    }

    pub fn map(&self) -> &BoundaryMap {
        &self.f
    }

    pub fn space_x(&self) -> &ModelSpace {
        self.pix.space()
    }

    pub fn space_y(&self) -> &ModelSpace {
        self.piy.space()
    }

    pub fn pi_x(&self) -> &Arc<BarycenterMap> {
        &self.pix
    }

    pub fn pi_y(&self) -> &Arc<BarycenterMap> {
        &self.piy
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn d(&self) -> f64 {
        self.pix.d()
    }

    pub fn d_prime(&self) -> f64 {
        self.piy.d()
    }

    /// The center `π_Y(f(T))` of the image of a triangle.
    pub fn image_center(&self, t: [BoundaryPoint; 3]) -> Result<ModelPoint> {
        let ft = [self.f.forward(t[0])?, self.f.forward(t[1])?, self.f.forward(t[2])?];
        if let Some((a, b, constant)) = self.piy.violation(&ft)? {
            return Err(Error::ImageOutsideStratum {
                a,
                b,
                constant,
                bound: self.piy.d(),
            });
        }
        self.piy.pi(ft)
    }

    pub fn evaluate(&self, x: ModelPoint) -> Result<Evaluation> {
        let x = self.space_x().canonical(x)?;
        let key = point_key(x);
        if let Some(e) = self.cache.read().expect("cache").get(&key) {
            return Ok(*e);
        }
        let pre = self.pix.preimage(x, self.r, None)?;
        let cloud = pre
            .iter()
            .map(|p| self.image_center(p.triangle))
            .collect::<Result<Vec<_>>>()?;
        let (h, _) = min_enclosing_ball(self.space_y(), &cloud)?;
        let e = Evaluation {
            x,
            h,
            pi_diameter: diameter(self.space_y(), &cloud)?,
            triangle_count: pre.len(),
        };
        self.cache.write().expect("cache").insert(key, e);
        Ok(e)
    }

    pub fn h(&self, x: ModelPoint) -> Result<ModelPoint> {
        Ok(self.evaluate(x)?.h)
    }

    /// Evaluates many points in parallel, preserving order.
    pub fn evaluate_all(&self, xs: &[ModelPoint]) -> Result<Vec<Evaluation>> {
        xs.par_iter().map(|&x| self.evaluate(x)).collect()
    }
}

/// A region of query points: the plane box `[-half, half]²` together with ray
/// points at the given heights, or tree points within `half` edges of vertex 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRegion {
    pub half: f64,
    pub ray_heights: Vec<f64>,
}

impl QueryRegion {
    pub fn new(half: f64) -> Self {
        QueryRegion {
            half,
            ray_heights: vec![0.5, 1.0],
        }
    }

    pub fn doubled(&self) -> Self {
        QueryRegion {
            half: self.half * 2.0,
            ray_heights: self.ray_heights.clone(),
        }
    }

    fn tree_points(&self, space: &ModelSpace) -> Vec<ModelPoint> {
        let t = space.tree().expect("tree");
        let depth = self.half.max(0.0) as usize;
        let mut out: Vec<ModelPoint> = (0..t.vertex_count())
            .filter(|&v| t.hop_depth(v) <= depth)
            .map(|v| ModelPoint::TreeVertex { v })
            .collect();
        for &(u, v, len) in t.edges() {
            if t.hop_depth(u) <= depth && t.hop_depth(v) <= depth {
                out.push(ModelPoint::TreeEdge { u, v, t: len / 2.0 });
            }
        }
        for &leaf in t.ends() {
            if t.hop_depth(leaf) <= depth {
                out.extend(self.ray_heights.iter().map(|&h| ModelPoint::TreeRay { leaf, h }));
            }
        }
        out
    }

    /// About `count` query points on a regular grid; a tenth of them on rays.
    pub fn grid(&self, space: &ModelSpace, count: usize) -> Vec<ModelPoint> {
        match space {
            ModelSpace::MetricTree(_) => self.tree_points(space),
            _ => {
                let side = ((count as f64 * 0.9).sqrt().ceil() as usize).max(2);
                let mut out = Vec::with_capacity(count);
                for i in 0..side {
                    for j in 0..side {
                        let s = |k: usize| -self.half + 2.0 * self.half * k as f64 / (side - 1) as f64;
                        out.push(ModelPoint::plane(s(i), s(j)));
                    }
                }
                if matches!(space, ModelSpace::LatticeRayPlane) && !self.ray_heights.is_empty() {
                    let per = count.saturating_sub(out.len()) / self.ray_heights.len();
                    let rside = ((per as f64).sqrt().floor() as usize).max(1);
                    let half = self.half.floor() as i64;
                    for i in 0..rside {
                        for j in 0..rside {
                            let s = |k: usize| {
                                if rside == 1 {
                                    0
                                } else {
                                    -half + (2 * half * k as i64) / (rside as i64 - 1)
                                }
                            };
                            for &h in &self.ray_heights {
                                out.push(ModelPoint::ray(s(i), s(j), h));
                            }
                        }
                    }
                }
                out
            }
        }
    }

    /// One random query point.
    pub fn sample(&self, space: &ModelSpace, rng: &mut impl Rng) -> ModelPoint {
        match space {
            ModelSpace::MetricTree(_) => {
                let pts = self.tree_points(space);
                pts[rng.gen_range(0..pts.len())]
            }
            ModelSpace::LatticeRayPlane if !self.ray_heights.is_empty() && rng.gen_bool(0.1) => {
                let half = self.half.floor() as i64;
                let h = self.ray_heights[rng.gen_range(0..self.ray_heights.len())];
                ModelPoint::ray(rng.gen_range(-half..=half), rng.gen_range(-half..=half), h)
            }
            _ => ModelPoint::plane(
                rng.gen_range(-self.half..=self.half),
                rng.gen_range(-self.half..=self.half),
            ),
        }
    }
}

/// Smallest `R = 2^k ≥ 1` for which every query has a nonempty preimage.
pub fn select_radius(pix: &BarycenterMap, queries: &[ModelPoint]) -> Result<f64> {
    const MAX_R: f64 = 4096.0;
    let mut r = 1.0;
    loop {
        let ok = queries
            .par_iter()
            .map(|&x| match pix.preimage(x, r, None) {
                Ok(_) => Ok(true),
                Err(Error::EmptyPreimage { .. }) => Ok(false),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<bool>>>()?;
        if ok.into_iter().all(|b| b) {
            return Ok(r);
        }
        r *= 2.0;
        if r > MAX_R {
            return Err(Error::EmptyPreimage { radius: r });
        }
    }
}

/// Estimated constants of the extension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtensionConstants {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "R")]
    pub r: f64,
    /// `C₂(L)`: image centers of triangles with centers within `L` lie within this.
    pub c2: f64,
    /// `M = C₂(2R)`, bounding the diameter of `Π(x)`.
    #[serde(rename = "M")]
    pub m: f64,
    /// `C₃ = C₂(L + 2R) + 2M`, bounding `d(h(x), h(y))` when `d(x, y) ≤ L`.
    pub c3: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Pairs of `D`-triangles with centers within `l` of each other, the first
/// centered in `region`. Sample `i` draws from stream `i`, so the same seed
/// gives the same pairs in larger regions as far as they fit.
pub fn sample_triangle_pairs(
    pix: &BarycenterMap,
    region: &QueryRegion,
    l: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<(Preimage, Preimage)>> {
    let classes = pix.classes()?;
    if classes.is_empty() {
        return Err(Error::EmptyStratum);
    }
    let space = pix.space();
    let draws = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            for _ in 0..32 {
                let (t1, b1) = classes[rng.gen_range(0..classes.len())];
                let (t2, b2) = classes[rng.gen_range(0..classes.len())];
                let (p1, p2) = match space {
                    ModelSpace::LatticeRayPlane => {
                        let half = region.half.floor() as i64;
                        let g1 = LatticeIsometry::translation(rng.gen_range(-half..=half), rng.gen_range(-half..=half));
                        let c1 = b1.transformed(&g1);
                        let (rho, th) = (l * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..std::f64::consts::TAU));
                        let (u, v) = (c1.base().expect("lattice"), b2.base().expect("lattice"));
                        let g2 = LatticeIsometry::translation(
                            (u[0] + rho * th.cos() - v[0]).round() as i64,
                            (u[1] + rho * th.sin() - v[1]).round() as i64,
                        );
                        (
                            (t1.map(|b| b.transformed(&g1)), c1),
                            (t2.map(|b| b.transformed(&g2)), b2.transformed(&g2)),
                        )
                    }
                    _ => ((t1, b1), (t2, b2)),
                };
                let dist = space.distance(p1.1, p2.1)?;
                if dist <= l + EPS_GEOM && p1.0 != p2.0 {
                    let pre = |(triangle, barycenter): ([BoundaryPoint; 3], ModelPoint)| Preimage {
                        triangle,
                        barycenter,
                        distance: dist,
                    };
                    return Ok(Some((pre(p1), pre(p2))));
                }
            }
            Ok(None)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(draws.into_iter().flatten().collect())
}

/// `C₂(L)`: largest distance between image centers of sampled triangle pairs
/// whose centers are within `L`, padded by the table safety factor.
pub fn expansion_constant(h: &ExtendedMap, region: &QueryRegion, l: f64, samples: usize, seed: u64) -> Result<f64> {
    let pairs = sample_triangle_pairs(&h.pix, region, l, samples, seed)?;
    let d = pairs
        .par_iter()
        .map(|(p, q)| {
            h.space_y()
                .distance(h.image_center(p.triangle)?, h.image_center(q.triangle)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(d.into_iter().fold(0.0, f64::max) * SAFETY_FACTOR)
}

/// Estimates `C₂(L)`, `M` and `C₃` for `h`.
pub fn bounded_expansion(
    h: &ExtendedMap,
    region: &QueryRegion,
    l: f64,
    samples: usize,
    seed: u64,
) -> Result<ExtensionConstants> {
    let r = h.r();
    let c2 = expansion_constant(h, region, l, samples, seed)?;
    let m = expansion_constant(h, region, 2.0 * r, samples, seed)?;
    let c3 = expansion_constant(h, region, l + 2.0 * r, samples, seed)? + 2.0 * m;
    Ok(ExtensionConstants {
        l,
        r,
        c2,
        m,
        c3,
        samples,
        seed,
    })
}

/// A sampled pair with distances before and after `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QiPair {
    pub x: ModelPoint,
    pub y: ModelPoint,
    pub d_x: f64,
    pub d_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QiReport {
    /// Fitted upper bound `d_Y ≤ λ̂ d_X + ε̂`.
    pub lambda_hat: f64,
    pub eps_hat: f64,
    /// Fitted lower bound, as `d_X ≤ λ d_Y + ε`.
    pub lower_lambda: f64,
    pub lower_eps: f64,
    /// The pair attaining `ε̂`.
    pub worst_pair: QiPair,
    pub pairs: usize,
    /// Whether the fitted upper bound holds on every pair when rechecked.
    pub recheck: bool,
}

/// Fits `y ≤ λ x + ε`: `λ` is the slope of the upper convex hull of the points
/// and the origin at the mean `x`, and `ε` the least offset making the line
/// dominate every point.
pub fn fit_upper_line(points: &[(f64, f64)]) -> (f64, f64) {
    if points.is_empty() {
        return (0.0, 0.0);
    }
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.push((0.0, 0.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            if (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let mean = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
    let slope = hull
        .windows(2)
        .filter(|w| w[1].0 > w[0].0)
        .find(|w| mean <= w[1].0)
        .or_else(|| hull.windows(2).rev().find(|w| w[1].0 > w[0].0))
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .unwrap_or(0.0)
        .max(0.0);
    let eps = points.iter().map(|&(x, y)| y - slope * x).fold(0.0, f64::max);
    (slope, eps)
}

/// Samples pairs in `region` and fits linear upper and lower distortion bounds of `h`.
pub fn qi_probe(h: &ExtendedMap, region: &QueryRegion, sample_pairs: usize, seed: u64) -> Result<QiReport> {
    let sx = h.space_x();
    let pairs = (0..sample_pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let x = region.sample(sx, &mut rng);
            let y = region.sample(sx, &mut rng);
            Ok(QiPair {
                x,
                y,
                d_x: sx.distance(x, y)?,
                d_y: h.space_y().distance(h.h(x)?, h.h(y)?)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("qi_probe needs at least one pair".into()));
    }
    let up: Vec<(f64, f64)> = pairs.iter().map(|p| (p.d_x, p.d_y)).collect();
    let (lambda_hat, eps_hat) = fit_upper_line(&up);
    let down: Vec<(f64, f64)> = pairs.iter().map(|p| (p.d_y, p.d_x)).collect();
    let (lower_lambda, lower_eps) = fit_upper_line(&down);
    let worst_pair = *pairs
        .iter()
        .max_by(|a, b| (a.d_y - lambda_hat * a.d_x).total_cmp(&(b.d_y - lambda_hat * b.d_x)))
        .expect("nonempty");
    let recheck = pairs.iter().all(|p| p.d_y <= lambda_hat * p.d_x + eps_hat);
    Ok(QiReport {
        lambda_hat,
        eps_hat,
        lower_lambda,
        lower_eps,
        worst_pair,
        pairs: pairs.len(),
        recheck,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuasiInverseReport {
    pub max_displacement_xx: f64,
    pub max_displacement_yy: f64,
    pub worst_x: ModelPoint,
    pub worst_y: ModelPoint,
}

/// Largest displacement of `h_yx ∘ h_xy` and `h_xy ∘ h_yx` on sampled points.
pub fn quasi_inverse_probe(
    h_xy: &ExtendedMap,
    h_yx: &ExtendedMap,
    region: &QueryRegion,
    samples: usize,
    seed: u64,
) -> Result<QuasiInverseReport> {
    let run = |a: &ExtendedMap, b: &ExtendedMap, stream: u64| -> Result<(f64, ModelPoint)> {
        let s = a.space_x();
        let d = (0..samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(seed ^ stream, i as u64);
                let x = region.sample(s, &mut rng);
                Ok((s.distance(x, b.h(a.h(x)?)?)?, x))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(d.into_iter()
            .fold((0.0, ModelPoint::plane(0.0, 0.0)), |m, v| if v.0 > m.0 { v } else { m }))
    };
    let (xx, wx) = run(h_xy, h_yx, 0)?;
    let (yy, wy) = run(h_yx, h_xy, 1)?;
    Ok(QuasiInverseReport {
        max_displacement_xx: xx,
        max_displacement_yy: yy,
        worst_x: wx,
        worst_y: wy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub height: f64,
    pub x: ModelPoint,
    pub hx: ModelPoint,
    pub deviation: f64,
}

/// The ray from the basepoint of `space` to `b`: the vertical ray itself in
/// the lattice-ray plane, the ray from vertex 0 in a tree.
pub fn ray_toward(space: &ModelSpace, b: BoundaryPoint) -> Result<GeodesicPath> {
    let base = match space {
        ModelSpace::MetricTree(_) => ModelPoint::TreeVertex { v: 0 },
        _ => b.foot(),
    };
    geodesic(space, Location::Point(base), Location::Ideal(b))
}

/// Distances from `h(x_t)` to the ray toward `f(p)`, where `x_t` runs up the
/// ray toward `p` at the given heights.
pub fn boundary_agreement_probe(h: &ExtendedMap, p: BoundaryPoint, heights: &[f64]) -> Result<Vec<AgreementRow>> {
    let target = ray_toward(h.space_y(), h.map().forward(p)?)?;
    let source = ray_toward(h.space_x(), p)?;
    let (start, _) = source.param_range();
    heights
        .par_iter()
        .map(|&t| {
            let x = source.point_at(h.space_x(), start + t)?;
            let hx = h.h(x)?;
            Ok(AgreementRow {
                height: t,
                x,
                hx,
                deviation: target.distance_to(h.space_y(), hx)?,
            })
        })
        .collect()
}
