//! Boundary maps, strata of boundary tuples, cross-ratios, and probes of
//! 2-stability and the quasi-mobius property.

use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contracting::{boundary_param, certify_pair, pair_constant, ContractingCertificate};
use crate::error::{Error, Result};
use crate::path::{line, GeodesicPath};
use crate::sampling::stream_rng;
use crate::space::{BoundaryPoint, LatticeIsometry, ModelSpace, Window, EPS_GEOM};
use crate::tables::TableSet;

/// JSON description of a boundary map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapSpec {
    Identity,
    Translation {
        dx: i64,
        dy: i64,
    },
    /// Interchanges `r_{n,0}` and `r_{-n,0}` for every `n`, fixing all other rays.
    PaperSwap,
    /// Explicit finite bijection; unlisted points are fixed.
    Table {
        pairs: Vec<([i64; 2], [i64; 2])>,
    },
}

#[derive(Debug, Clone)]
enum MapKind {
    Identity,
    Isometry(LatticeIsometry),
    Swap,
    Table {
        forward: HashMap<(i64, i64), (i64, i64)>,
        inverse: HashMap<(i64, i64), (i64, i64)>,
    },
}

/// A bijection of boundary points together with its inverse.
#[derive(Debug, Clone)]
pub struct BoundaryMap {
    kind: MapKind,
    spec: Option<MapSpec>,
    label: String,
}

impl BoundaryMap {
    pub fn identity() -> Self {
        Self::from_spec(MapSpec::Identity).expect("identity")
    }

    pub fn translation(dx: i64, dy: i64) -> Self {
        Self::from_spec(MapSpec::Translation { dx, dy }).expect("translation")
    }

    pub fn paper_swap() -> Self {
        Self::from_spec(MapSpec::PaperSwap).expect("swap")
    }

    /// The boundary map induced by a lattice isometry.
    pub fn isometry(g: LatticeIsometry) -> Self {
        BoundaryMap {
            kind: MapKind::Isometry(g),
            spec: None,
            label: format!("isometry{:?}+({},{})", g.linear, g.dx, g.dy),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_spec(serde_json::from_str(s)?)
    }

    pub fn from_spec(spec: MapSpec) -> Result<Self> {
        let (kind, label) = match &spec {
            MapSpec::Identity => (MapKind::Identity, "identity".to_string()),
            MapSpec::Translation { dx, dy } => (
                MapKind::Isometry(LatticeIsometry::translation(*dx, *dy)),
                format!("translation({dx},{dy})"),
            ),
            MapSpec::PaperSwap => (MapKind::Swap, "paper_swap".to_string()),
            MapSpec::Table { pairs } => {
                let mut forward = HashMap::new();
                let mut inverse = HashMap::new();
                for &([m, n], [s, t]) in pairs {
                    if forward.insert((m, n), (s, t)).is_some() {
                        return Err(Error::InvalidMap(format!("({m},{n}) listed twice")));
                    }
                    if inverse.insert((s, t), (m, n)).is_some() {
                        return Err(Error::InvalidMap(format!("({s},{t}) is the image of two points")));
                    }
                }
                // Unlisted points are fixed, so the listed sources and targets
                // must coincide for the whole map to be a bijection.
                if let Some(&(s, t)) = inverse.keys().find(|k| !forward.contains_key(*k)) {
                    return Err(Error::InvalidMap(format!(
                        "({s},{t}) is an image but not listed as a source; the map would not be injective"
                    )));
                }
                (MapKind::Table { forward, inverse }, format!("table[{}]", pairs.len()))
            }
        };
        Ok(BoundaryMap {
            kind,
            spec: Some(spec),
            label,
        })
    }

    pub fn spec(&self) -> Option<&MapSpec> {
        self.spec.as_ref()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The lattice isometry inducing this map, if it is one.
    pub fn as_isometry(&self) -> Option<LatticeIsometry> {
        match self.kind {
            MapKind::Identity => Some(LatticeIsometry::IDENTITY),
            MapKind::Isometry(g) => Some(g),
            _ => None,
        }
    }

    fn apply(&self, b: BoundaryPoint, inverse: bool) -> Result<BoundaryPoint> {
        let lattice = |b: BoundaryPoint| {
            b.lattice_index()
                .ok_or_else(|| Error::InvalidMap(format!("{} acts on lattice rays only, got {b}", self.label)))
        };
        Ok(match &self.kind {
            MapKind::Identity => b,
            MapKind::Isometry(g) => {
                let g = if inverse { g.inverse() } else { *g };
                lattice(b)?;
                b.transformed(&g)
            }
            MapKind::Swap => {
                let (m, n) = lattice(b)?;
                if n == 0 {
                    BoundaryPoint::lattice(-m, 0)
                } else {
                    b
                }
            }
            MapKind::Table { forward, inverse: inv } => {
                let k = lattice(b)?;
                let table = if inverse { inv } else { forward };
                let (m, n) = table.get(&k).copied().unwrap_or(k);
                BoundaryPoint::lattice(m, n)
            }
        })
    }

    pub fn forward(&self, b: BoundaryPoint) -> Result<BoundaryPoint> {
        self.apply(b, false)
    }

    pub fn inverse(&self, b: BoundaryPoint) -> Result<BoundaryPoint> {
        self.apply(b, true)
    }

    /// The inverse as a map in its own right.
    pub fn inverse_map(&self) -> BoundaryMap {
        let (kind, spec) = match &self.kind {
            MapKind::Identity => (MapKind::Identity, Some(MapSpec::Identity)),
            MapKind::Isometry(g) => {
                let gi = g.inverse();
                let spec = match self.spec {
                    Some(MapSpec::Translation { .. }) => Some(MapSpec::Translation { dx: gi.dx, dy: gi.dy }),
                    _ => None,
                };
                (MapKind::Isometry(gi), spec)
            }
            MapKind::Swap => (MapKind::Swap, Some(MapSpec::PaperSwap)),
            MapKind::Table { forward, inverse } => {
                let mut pairs: Vec<([i64; 2], [i64; 2])> =
                    inverse.iter().map(|(&(a, b), &(c, d))| ([a, b], [c, d])).collect();
                pairs.sort_unstable();
                (
                    MapKind::Table {
                        forward: inverse.clone(),
                        inverse: forward.clone(),
                    },
                    Some(MapSpec::Table { pairs }),
                )
            }
        };
        BoundaryMap {
            kind,
            spec,
            label: format!("inverse of {}", self.label),
        }
    }

    /// Checks `inverse(forward(b)) = b` and `forward(inverse(b)) = b` on `points`.
    pub fn check_bijection(&self, points: &[BoundaryPoint]) -> Result<()> {
        for &b in points {
            if self.inverse(self.forward(b)?)? != b || self.forward(self.inverse(b)?)? != b {
                return Err(Error::InvalidMap(format!("{} is not inverted at {b}", self.label)));
            }
        }
        Ok(())
    }
}

/// The contracting constant of one pair of a tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCertificate {
    pub i: usize,
    pub j: usize,
    pub certificate: ContractingCertificate,
}

/// A tuple of distinct boundary points whose pairwise lines are all
/// `D`-contracting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumTuple {
    pub points: Vec<BoundaryPoint>,
    #[serde(rename = "D")]
    pub d: f64,
    pub certificates: Vec<PairCertificate>,
}

impl StratumTuple {
    /// The smallest `D` whose stratum contains the tuple.
    pub fn tight_d(&self) -> f64 {
        self.certificates.iter().map(|c| c.certificate.d).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Membership {
    Member(StratumTuple),
    Counterexample {
        a: BoundaryPoint,
        b: BoundaryPoint,
        constant: f64,
    },
}

impl Membership {
    pub fn is_member(&self) -> bool {
        matches!(self, Membership::Member(_))
    }
}

fn check_distinct(points: &[BoundaryPoint]) -> Result<()> {
    for (i, a) in points.iter().enumerate() {
        if points[i + 1..].contains(a) {
            return Err(Error::DuplicatePoints);
        }
    }
    Ok(())
}

/// Certifies every pair of `points` at level `d`, or returns the first pair
/// whose line is not `d`-contracting.
pub fn in_stratum(space: &ModelSpace, points: &[BoundaryPoint], d: f64) -> Result<Membership> {
    check_distinct(points)?;
    let mut certificates = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let c = certify_pair(space, points[i], points[j])?;
            if c.d > d + EPS_GEOM {
                return Ok(Membership::Counterexample {
                    a: points[i],
                    b: points[j],
                    constant: c.d,
                });
            }
            certificates.push(PairCertificate { i, j, certificate: c });
        }
    }
    Ok(Membership::Member(StratumTuple {
        points: points.to_vec(),
        d,
        certificates,
    }))
}

/// Largest pairwise contracting constant of a tuple of distinct points.
pub fn stratum_level(space: &ModelSpace, points: &[BoundaryPoint]) -> Result<f64> {
    check_distinct(points)?;
    let mut worst = 0.0f64;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            worst = worst.max(pair_constant(space, points[i], points[j])?);
        }
    }
    Ok(worst)
}

/// The signed cross-ratio `[a, b, c, d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossRatio {
    pub value: f64,
    pub tuple: StratumTuple,
    pub geodesic_used: GeodesicPath,
    /// Bound `6 δ_D` on the gap between `|value|` and the supremum over all
    /// geodesics from `a` to `c`, when a table covers the tuple's level.
    pub slack: Option<f64>,
}

/// Signed distance from the projection of `b` to that of `d` along the line
/// from `a` to `c`; positive when it points from `a` towards `c`.
pub fn cross_ratio_value(
    space: &ModelSpace,
    a: BoundaryPoint,
    b: BoundaryPoint,
    c: BoundaryPoint,
    d: BoundaryPoint,
) -> Result<f64> {
    cross_ratio_on(space, &line(space, a, c)?, b, d)
}

fn cross_ratio_on(space: &ModelSpace, alpha: &GeodesicPath, b: BoundaryPoint, d: BoundaryPoint) -> Result<f64> {
    for x in [b, d] {
        if alpha.has_ideal_endpoint(x) {
            return Err(Error::DuplicatePoints);
        }
    }
    let v = boundary_param(space, alpha, d)? - boundary_param(space, alpha, b)?;
    // Coinciding projections give +0.
    Ok(if v == 0.0 { 0.0 } else { v })
}

pub fn cross_ratio(
    space: &ModelSpace,
    a: BoundaryPoint,
    b: BoundaryPoint,
    c: BoundaryPoint,
    d: BoundaryPoint,
) -> Result<CrossRatio> {
    let alpha = line(space, a, c)?;
    let value = cross_ratio_on(space, &alpha, b, d)?;
    let mut pts = vec![a, b, c];
    if d != b {
        pts.push(d);
    }
    let tuple = match in_stratum(space, &pts, f64::INFINITY)? {
        Membership::Member(t) => t,
        Membership::Counterexample { .. } => unreachable!("every tuple lies in the infinite stratum"),
    };
    Ok(CrossRatio {
        value,
        tuple: StratumTuple {
            d: stratum_level(space, &pts)?,
            ..tuple
        },
        geodesic_used: alpha,
        slack: None,
    })
}

impl CrossRatio {
    /// Fill in the slack from `tables` at the tuple's level.
    pub fn with_slack(mut self, tables: &TableSet) -> Self {
        self.slack = tables.delta(self.tuple.d).ok().map(|dl| 6.0 * dl);
        self
    }
}

/// Outcome of a growth test across three nested windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    /// The probed quantity stayed bounded on the largest window.
    CertifiedBounded {
        window: f64,
        bound: f64,
    },
    /// The quantity grew by more than the ratio threshold across two
    /// consecutive doublings; `witness` lists the worst configuration per window.
    Violation {
        witness: Vec<GrowthRow>,
    },
    Inconclusive {
        ratios: Vec<f64>,
    },
}

impl Verdict {
    pub fn is_violation(&self) -> bool {
        matches!(self, Verdict::Violation { .. })
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::CertifiedBounded { window, bound } => {
                write!(f, "certified-bounded(window {window}): max {bound}")
            }
            Verdict::Violation { witness } => {
                write!(f, "violation(witness):")?;
                for row in witness {
                    write!(f, "\n  {row}")?;
                }
                Ok(())
            }
            Verdict::Inconclusive { ratios } => write!(f, "inconclusive: growth ratios {ratios:?}"),
        }
    }
}

/// Worst configuration found in one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub window: f64,
    pub value: f64,
    pub points: Vec<BoundaryPoint>,
    pub images: Vec<BoundaryPoint>,
}

impl fmt::Display for GrowthRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[BoundaryPoint]| v.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(", ");
        write!(
            f,
            "window {}: ({}) -> ({}) value {}",
            self.window,
            list(&self.points),
            list(&self.images),
            self.value
        )
    }
}

/// Growth factor per doubling that counts as unbounded growth.
pub const GROWTH_RATIO: f64 = 1.5;

/// Ratio test over windows `W, 2W, 4W`.
pub fn growth_verdict(rows: &[GrowthRow]) -> Verdict {
    let ratios: Vec<f64> = rows
        .windows(2)
        .map(|w| match (w[0].value > 0.0, w[1].value > 0.0) {
            (true, _) => w[1].value / w[0].value,
            (false, true) => f64::INFINITY,
            (false, false) => 1.0,
        })
        .collect();
    let grown = ratios.iter().filter(|&&r| r > GROWTH_RATIO).count();
    if !ratios.is_empty() && grown == ratios.len() {
        Verdict::Violation { witness: rows.to_vec() }
    } else if grown > 0 {
        Verdict::Inconclusive { ratios }
    } else {
        let last = rows.last().expect("at least one window");
        Verdict::CertifiedBounded {
            window: last.window,
            bound: last.value,
        }
    }
}

/// One sampled pair and its image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairImage {
    pub a: BoundaryPoint,
    pub b: BoundaryPoint,
    pub fa: BoundaryPoint,
    pub fb: BoundaryPoint,
    pub constant_in: f64,
    pub constant_out: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStableReport {
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "D_prime_estimate")]
    pub d_prime_estimate: f64,
    pub worst_pair: PairImage,
    pub windows: Vec<GrowthRow>,
    pub pairs_examined: Vec<usize>,
    pub verdict: Verdict,
    /// Every pair examined in the largest window.
    pub scatter: Vec<PairImage>,
}

/// Pairs in the `D`-stratum inside `window`: all of them if there are at most
/// `sample_count`, otherwise `sample_count` drawn by rejection sampling.
pub fn stratum_pairs(
    space: &ModelSpace,
    window: &Window,
    d: f64,
    sample_count: usize,
    seed: u64,
) -> Result<Vec<(BoundaryPoint, BoundaryPoint)>> {
    let pts = space.enumerate_boundary(window)?;
    let mut all = Vec::new();
    match (space, window) {
        (ModelSpace::LatticeRayPlane, Window::Lattice(bx)) => {
            let r = d.floor() as i64;
            for &a in &pts {
                let (m, n) = a.lattice_index().expect("lattice");
                for dm in 0..=r {
                    for dn in -r..=r {
                        if (dm, dn) <= (0, 0) || ((dm * dm + dn * dn) as f64).sqrt() > d + EPS_GEOM {
                            continue;
                        }
                        if bx.contains(m + dm, n + dn) {
                            all.push((a, BoundaryPoint::lattice(m + dm, n + dn)));
                        }
                    }
                }
            }
        }
        _ => {
            for (i, &a) in pts.iter().enumerate() {
                for &b in &pts[i + 1..] {
                    if pair_constant(space, a, b)? <= d + EPS_GEOM {
                        all.push((a, b));
                    }
                }
            }
        }
    }
    if all.len() <= sample_count {
        return Ok(all);
    }
    let mut rng = stream_rng(seed, u64::MAX);
    Ok((0..sample_count).map(|_| all[rng.gen_range(0..all.len())]).collect())
}

/// Largest image constant of `D`-contracting pairs on windows `W, 2W, 4W`.
#[allow(clippy::too_many_arguments)]
pub fn two_stable_probe(
    space_x: &ModelSpace,
    space_y: &ModelSpace,
    f: &BoundaryMap,
    d: f64,
    window: &Window,
    sample_count: usize,
    seed: u64,
) -> Result<TwoStableReport> {
    let mut rows = Vec::new();
    let mut examined = Vec::new();
    let mut worst = None;
    let mut scatter = Vec::new();
    let mut w = *window;
    for _ in 0..3 {
        let pairs = stratum_pairs(space_x, &w, d, sample_count, seed)?;
        if pairs.is_empty() {
            return Err(Error::EmptyStratum);
        }
        let images: Vec<PairImage> = pairs
            .par_iter()
            .map(|&(a, b)| {
                let (fa, fb) = (f.forward(a)?, f.forward(b)?);
                Ok(PairImage {
                    a,
                    b,
                    fa,
                    fb,
                    constant_in: pair_constant(space_x, a, b)?,
                    constant_out: pair_constant(space_y, fa, fb)?,
                })
            })
            .collect::<Result<_>>()?;
        let top = *images
            .iter()
            .reduce(|x, y| if y.constant_out > x.constant_out { y } else { x })
            .expect("nonempty");
        rows.push(GrowthRow {
            window: w.size(),
            value: top.constant_out,
            points: vec![top.a, top.b],
            images: vec![top.fa, top.fb],
        });
        examined.push(images.len());
        worst = Some(top);
        scatter = images;
        w = w.doubled();
    }
    let worst = worst.expect("three windows");
    Ok(TwoStableReport {
        d,
        d_prime_estimate: worst.constant_out,
        worst_pair: worst,
        verdict: growth_verdict(&rows),
        windows: rows,
        pairs_examined: examined,
        scatter,
    })
}

/// One sampled 4-tuple with input and output cross-ratio magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub cr_in: f64,
    pub cr_out: f64,
    pub points: [BoundaryPoint; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiMobiusReport {
    #[serde(rename = "D")]
    pub d: f64,
    /// Samples from the largest window, in sampling order.
    pub scatter: Vec<ScatterRow>,
    /// Least non-decreasing step function above the scatter: `(t, ψ(t))` at
    /// each distinct input magnitude.
    pub envelope: Vec<(f64, f64)>,
    /// `6 δ_D` from the constant tables.
    pub slack: f64,
    /// Largest `cr_out - cr_in` over the scatter.
    pub max_excess: f64,
    pub windows: Vec<GrowthRow>,
    pub verdict: Verdict,
}

impl QuasiMobiusReport {
    /// Whether `ψ(t) ≤ λ t + slack` at every envelope step.
    pub fn within_linear(&self, lambda: f64) -> bool {
        self.envelope
            .iter()
            .all(|&(t, p)| p <= lambda * t + self.slack + EPS_GEOM)
    }
}

/// The least non-decreasing function dominating the scatter.
pub fn monotone_envelope(scatter: &[ScatterRow]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = scatter.iter().map(|r| (r.cr_in, r.cr_out)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut running = f64::NEG_INFINITY;
    for (t, v) in pts {
        running = running.max(v);
        match out.last_mut() {
            Some(last) if last.0 == t => last.1 = running,
            _ => out.push((t, running)),
        }
    }
    out
}

/// Draws 4-tuples in the `D`-stratum: anchors run through the window in a
/// seeded order, and the other three points are added one at a time from the
/// box of radius `D` around the anchor, rejecting any candidate that repeats
/// a point or is more than `D` from one already chosen.
pub fn sample_stratum_tuples(
    space: &ModelSpace,
    window: &Window,
    d: f64,
    sample_count: usize,
    seed: u64,
) -> Result<Vec<[BoundaryPoint; 4]>> {
    let mut anchors = space.enumerate_boundary(window)?;
    anchors.shuffle(&mut stream_rng(seed, u64::MAX));
    if anchors.len() < 4 {
        return Err(Error::EmptyStratum);
    }
    const TRIES: usize = 64;
    const RESTARTS: usize = 8;
    let draws: Vec<Option<[BoundaryPoint; 4]>> = (0..sample_count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let a = anchors[i % anchors.len()];
            'restart: for _ in 0..RESTARTS {
                let mut t = [a; 4];
                for k in 1..4 {
                    let mut found = false;
                    for _ in 0..TRIES {
                        let c = match (space, window, a) {
                            (ModelSpace::LatticeRayPlane, Window::Lattice(bx), BoundaryPoint::Lattice { m, n }) => {
                                let r = d.floor().max(1.0) as i64;
                                let (p, q) = (m + rng.gen_range(-r..=r), n + rng.gen_range(-r..=r));
                                if !bx.contains(p, q) {
                                    continue;
                                }
                                BoundaryPoint::lattice(p, q)
                            }
                            _ => anchors[rng.gen_range(0..anchors.len())],
                        };
                        if t[..k].contains(&c) {
                            continue;
                        }
                        let mut close = true;
                        for &prev in &t[..k] {
                            if pair_constant(space, prev, c)? > d + EPS_GEOM {
                                close = false;
                                break;
                            }
                        }
                        if close {
                            t[k] = c;
                            found = true;
                            break;
                        }
                    }
                    if !found {
                        continue 'restart;
                    }
                }
                return Ok(Some(t));
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;
    let out: Vec<_> = draws.into_iter().flatten().collect();
    if out.is_empty() {
        return Err(Error::EmptyStratum);
    }
    Ok(out)
}

/// Compares input and output cross-ratio magnitudes of `f` on sampled
/// 4-tuples of the `D`-stratum over windows `W, 2W, 4W`.
#[allow(clippy::too_many_arguments)]
pub fn quasi_mobius_probe(
    space_x: &ModelSpace,
    space_y: &ModelSpace,
    f: &BoundaryMap,
    d: f64,
    window: &Window,
    sample_count: usize,
    seed: u64,
) -> Result<QuasiMobiusReport> {
    let slack = 6.0 * TableSet::shared(space_x)?.delta(d)?;
    let mut rows = Vec::new();
    let mut scatter = Vec::new();
    let mut w = *window;
    for _ in 0..3 {
        let tuples = sample_stratum_tuples(space_x, &w, d, sample_count, seed)?;
        scatter = tuples
            .par_iter()
            .map(|&[a, b, c, e]| {
                let cr_in = cross_ratio_value(space_x, a, b, c, e)?.abs();
                let img = [f.forward(a)?, f.forward(b)?, f.forward(c)?, f.forward(e)?];
                let cr_out = cross_ratio_value(space_y, img[0], img[1], img[2], img[3])?.abs();
                Ok(ScatterRow {
                    cr_in,
                    cr_out,
                    points: [a, b, c, e],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let top = scatter
            .iter()
            .filter(|r| r.cr_in <= d + EPS_GEOM)
            .reduce(|x, y| if y.cr_out > x.cr_out { y } else { x })
            .ok_or(Error::EmptyStratum)?;
        rows.push(GrowthRow {
            window: w.size(),
            value: top.cr_out,
            points: top.points.to_vec(),
            images: top.points.iter().map(|&p| f.forward(p)).collect::<Result<_>>()?,
        });
        w = w.doubled();
    }
    let max_excess = scatter
        .iter()
        .map(|r| r.cr_out - r.cr_in)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(QuasiMobiusReport {
        d,
        envelope: monotone_envelope(&scatter),
        scatter,
        slack,
        max_excess,
        verdict: growth_verdict(&rows),
        windows: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::LatticeBox;

    const LRP: ModelSpace = ModelSpace::LatticeRayPlane;

    fn r(m: i64, n: i64) -> BoundaryPoint {
        BoundaryPoint::lattice(m, n)
    }

    #[test]
    fn maps_invert() {
        let pts = LRP
            .enumerate_boundary(&Window::Lattice(LatticeBox::centered(5)))
            .unwrap();
        for f in [
            BoundaryMap::identity(),
            BoundaryMap::translation(2, -1),
            BoundaryMap::paper_swap(),
            BoundaryMap::isometry(LatticeIsometry::rotation()),
            BoundaryMap::from_json(r#"{"kind":"table","pairs":[[[0,0],[1,1]],[[1,1],[0,0]]]}"#).unwrap(),
        ] {
            f.check_bijection(&pts).unwrap();
            let g = f.inverse_map();
            for &p in &pts {
                assert_eq!(g.forward(f.forward(p).unwrap()).unwrap(), p);
            }
        }
        let s = BoundaryMap::paper_swap();
        assert_eq!(s.forward(r(3, 0)).unwrap(), r(-3, 0));
        assert_eq!(s.forward(r(3, 1)).unwrap(), r(3, 1));
    }

    #[test]
    fn bad_tables_rejected() {
        assert!(BoundaryMap::from_json(r#"{"kind":"table","pairs":[[[0,0],[1,1]]]}"#).is_err());
        assert!(BoundaryMap::from_json(r#"{"kind":"table","pairs":[[[0,0],[1,1]],[[2,2],[1,1]]]}"#).is_err());
        assert!(BoundaryMap::from_json(r#"{"kind":"warp"}"#).is_err());
    }

    #[test]
    fn stratum_membership() {
        let m = in_stratum(&LRP, &[r(0, 0), r(1, 0), r(0, 1)], 2.0).unwrap();
        let Membership::Member(t) = m else {
            panic!("not a member")
        };
        let mut ks: Vec<f64> = t.certificates.iter().map(|c| c.certificate.d).collect();
        ks.sort_by(f64::total_cmp);
        assert_eq!(ks, vec![1.0, 1.0, 2f64.sqrt()]);
        for n in [3, 5] {
            let m = in_stratum(&LRP, &[r(0, 0), r(n, 0)], 2.0).unwrap();
            assert_eq!(
                m,
                Membership::Counterexample {
                    a: r(0, 0),
                    b: r(n, 0),
                    constant: n as f64
                }
            );
        }
        assert!(in_stratum(&LRP, &[r(0, 0), r(50, 7)], f64::INFINITY)
            .unwrap()
            .is_member());
        assert!(matches!(
            in_stratum(&LRP, &[r(0, 0), r(0, 0)], 2.0),
            Err(Error::DuplicatePoints)
        ));
    }

    #[test]
    fn paper_cross_ratios() {
        let f = BoundaryMap::paper_swap();
        for n in 1..=10 {
            let t = [r(n, 0), r(n + 1, 0), r(n, 1), r(n + 1, 1)];
            let before = cross_ratio(&LRP, t[0], t[1], t[2], t[3]).unwrap();
            assert!((before.value.abs() - 1.0).abs() < 1e-9);
            let i: Vec<_> = t.iter().map(|&p| f.forward(p).unwrap()).collect();
            let after = cross_ratio_value(&LRP, i[0], i[1], i[2], i[3]).unwrap();
            assert!(after.abs() > (2 * n - 1) as f64);
            assert!((after.abs() - ((4 * n * n + 1) as f64).sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn antisymmetry_and_zero() {
        let (a, b, c, d) = (r(0, 0), r(2, 1), r(3, 0), r(-1, 2));
        let x = cross_ratio_value(&LRP, a, b, c, d).unwrap();
        let y = cross_ratio_value(&LRP, a, d, c, b).unwrap();
        assert_eq!(x, -y);
        assert_eq!(cross_ratio_value(&LRP, a, b, c, b).unwrap(), 0.0);
        // Both project to the same point of the segment.
        assert_eq!(
            cross_ratio_value(&LRP, r(0, 0), r(1, 1), r(2, 0), r(1, -1)).unwrap(),
            0.0
        );
        assert!(cross_ratio_value(&LRP, a, a, c, d).is_err());
    }

    #[test]
    fn growth_verdicts() {
        let row = |w: f64, v: f64| GrowthRow {
            window: w,
            value: v,
            points: vec![],
            images: vec![],
        };
        assert!(growth_verdict(&[row(1.0, 1.0), row(2.0, 2.0), row(4.0, 4.0)]).is_violation());
        assert!(matches!(
            growth_verdict(&[row(1.0, 1.0), row(2.0, 2.0), row(4.0, 2.1)]),
            Verdict::Inconclusive { .. }
        ));
        assert!(matches!(
            growth_verdict(&[row(1.0, 2.0), row(2.0, 2.0), row(4.0, 2.0)]),
            Verdict::CertifiedBounded { .. }
        ));
        assert!(matches!(
            growth_verdict(&[row(1.0, 0.0), row(2.0, 0.0), row(4.0, 0.0)]),
            Verdict::CertifiedBounded { .. }
        ));
    }

    #[test]
    fn two_stable_identity_and_translation() {
        let w = Window::Lattice(LatticeBox::centered(3));
        for f in [BoundaryMap::identity(), BoundaryMap::translation(1, 0)] {
            let rep = two_stable_probe(&LRP, &LRP, &f, 2.0, &w, 100_000, 1).unwrap();
            assert_eq!(rep.d_prime_estimate, 2.0);
            assert!(matches!(rep.verdict, Verdict::CertifiedBounded { .. }));
        }
    }

    #[test]
    fn envelope_is_monotone() {
        let row = |i: f64, o: f64| ScatterRow {
            cr_in: i,
            cr_out: o,
            points: [r(0, 0); 4],
        };
        let env = monotone_envelope(&[row(1.0, 3.0), row(0.5, 1.0), row(2.0, 2.0), row(1.0, 1.0)]);
        assert_eq!(env, vec![(0.5, 1.0), (1.0, 3.0), (2.0, 3.0)]);
    }
}
