//! Empirical constant tables.
//!
//! Each constant that only exists abstractly (the slim-triangle constant, the
//! bounded-image constant, and so on) is estimated per model space by sweeping
//! a finite family of configurations at every `D` on a fixed grid, taking the
//! observed maximum, and padding it by a safety factor. Lookups at an
//! off-grid `D` use the next grid value up; tables are non-decreasing.
//!
//! Tables are built lazily on first use and shared process-wide. When the
//! `MORSELAB_TABLES` environment variable names a directory, tables are read
//! from and written to JSON files there.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::cross_ratio_value;
use crate::contracting::{pair_constant, slim_violation, verify_bounded_geodesic_image};
use crate::enclosing::diameter;
use crate::error::{Error, Result};
use crate::extension::{ek_set, small_flip_values, BarycenterMap};
use crate::path::{geodesic, line};
use crate::sampling::stream_rng;
use crate::space::{euclid, BoundaryPoint, Location, ModelPoint, ModelSpace, EPS_GEOM};

/// `D` values at which every table is estimated.
pub const D_GRID: [f64; 4] = [1.0, 2.0, 3.0, 4.0];
pub const SAFETY_FACTOR: f64 = 1.1;
/// Added after the safety factor so a zero observation still gives a positive bound.
pub const SAFETY_FLOOR: f64 = 1e-6;
pub const TABLE_SEED: u64 = 0x7ab1e5;
pub const TABLES_ENV: &str = "MORSELAB_TABLES";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    /// Slim-triangle constant `δ_D`.
    Delta,
    /// Bounded-geodesic-image constant `B_D`.
    Bgi,
    /// Contracting constant `D'` of the third side when two sides are `D`-contracting.
    Triangle,
    /// Diameter of `E_K` sets at `K = B_D + δ_D`.
    EkDiameter,
    /// Gap between barycenter distance and cross-ratio magnitude.
    Centers,
    /// Bound on the smallest of the three flipped cross-ratios.
    Flips,
}

impl TableKind {
    pub const ALL: [TableKind; 6] = [
        TableKind::Delta,
        TableKind::Bgi,
        TableKind::Triangle,
        TableKind::EkDiameter,
        TableKind::Centers,
        TableKind::Flips,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TableKind::Delta => "delta",
            TableKind::Bgi => "bgi",
            TableKind::Triangle => "triangle",
            TableKind::EkDiameter => "ek_diameter",
            TableKind::Centers => "centers",
            TableKind::Flips => "flips",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for TableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How a table was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// Configurations were drawn with attachment points within this multiple of `D`.
    pub window_factor: f64,
    pub safety_factor: f64,
    pub safety_floor: f64,
    /// Configurations examined per grid entry.
    pub configurations: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantTable {
    pub version: u32,
    pub table: TableKind,
    pub space_kind: String,
    pub space_key: String,
    pub grid: Vec<f64>,
    /// Padded, non-decreasing bounds.
    pub values: Vec<f64>,
    /// Observed maxima before padding.
    pub observed: Vec<f64>,
    pub provenance: Provenance,
}

impl ConstantTable {
    fn from_observed(table: TableKind, space: &ModelSpace, observed: Vec<f64>, configurations: Vec<usize>) -> Self {
        let mut running = 0.0f64;
        let values = observed
            .iter()
            .map(|&o| {
                running = running.max(o * SAFETY_FACTOR + SAFETY_FLOOR);
                running
            })
            .collect();
        ConstantTable {
            version: FORMAT_VERSION,
            table,
            space_kind: space.kind_name().to_string(),
            space_key: space_key(space),
            grid: D_GRID.to_vec(),
            values,
            observed,
            provenance: Provenance {
                seed: TABLE_SEED,
                window_factor: 2.0,
                safety_factor: SAFETY_FACTOR,
                safety_floor: SAFETY_FLOOR,
                configurations,
            },
        }
    }

    /// Grid value used for a lookup at `d`.
    pub fn grid_d(&self, d: f64) -> Result<f64> {
        self.index(d).map(|i| self.grid[i])
    }

    fn index(&self, d: f64) -> Result<usize> {
        if d.is_nan() || d < 0.0 {
            return Err(Error::InvalidArgument(format!("D must be non-negative, got {d}")));
        }
        self.grid
            .iter()
            .position(|&g| d <= g + EPS_GEOM)
            .ok_or_else(|| Error::TableOutOfRange {
                table: self.table.name().to_string(),
                d,
            })
    }

    pub fn lookup(&self, d: f64) -> Result<f64> {
        self.index(d).map(|i| self.values[i])
    }
}

/// Stable identifier of a model space, used for file names and the shared cache.
pub fn space_key(space: &ModelSpace) -> String {
    match space {
        ModelSpace::MetricTree(t) => {
            // FNV-1a over the canonical JSON; stable across builds.
            let json = serde_json::to_string(t).expect("tree serializes");
            let mut h: u64 = 0xcbf29ce484222325;
            for b in json.bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            format!("metric_tree-{h:016x}")
        }
        other => other.kind_name().to_string(),
    }
}

/// All constant tables of one model space.
#[derive(Debug)]
pub struct TableSet {
    space: ModelSpace,
    dir: Option<PathBuf>,
    tables: [OnceLock<ConstantTable>; 6],
}

impl TableSet {
    /// Tables for `space`, persisted under `dir` if given.
    pub fn new(space: ModelSpace, dir: Option<PathBuf>) -> Result<Self> {
        if matches!(space, ModelSpace::EuclideanPlane) {
            return Err(Error::NoBoundary(space.kind_name()));
        }
        Ok(TableSet {
            space,
            dir,
            tables: Default::default(),
        })
    }

    /// Process-wide tables for `space`, persisted under `$MORSELAB_TABLES` if set.
    pub fn shared(space: &ModelSpace) -> Result<&'static TableSet> {
        static SETS: OnceLock<Mutex<HashMap<String, &'static TableSet>>> = OnceLock::new();
        let key = space_key(space);
        let mut sets = SETS.get_or_init(Default::default).lock().expect("table registry");
        if let Some(s) = sets.get(&key) {
            return Ok(s);
        }
        let dir = std::env::var_os(TABLES_ENV).map(PathBuf::from);
        let set: &'static TableSet = Box::leak(Box::new(TableSet::new(space.clone(), dir)?));
        sets.insert(key, set);
        Ok(set)
    }

    pub fn space(&self) -> &ModelSpace {
        &self.space
    }

    fn path(&self, kind: TableKind) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(format!("{}.{}.json", space_key(&self.space), kind.name())))
    }

    fn load(&self, kind: TableKind, path: &Path) -> Option<ConstantTable> {
        let text = std::fs::read_to_string(path).ok()?;
        let t: ConstantTable = serde_json::from_str(&text).ok()?;
        (t.version == FORMAT_VERSION && t.table == kind && t.grid == D_GRID && t.space_key == space_key(&self.space))
            .then_some(t)
    }

    /// The table of `kind`, loading or building it on first use.
    pub fn get(&self, kind: TableKind) -> Result<&ConstantTable> {
        let cell = &self.tables[kind.index()];
        if let Some(t) = cell.get() {
            return Ok(t);
        }
        let path = self.path(kind);
        if let Some(t) = path.as_deref().and_then(|p| self.load(kind, p)) {
            return Ok(cell.get_or_init(|| t));
        }
        let t = self.build(kind)?;
        if let Some(p) = path {
            if let Some(parent) = p.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&p, serde_json::to_string_pretty(&t)?)?;
        }
        Ok(cell.get_or_init(|| t))
    }

    pub fn lookup(&self, kind: TableKind, d: f64) -> Result<f64> {
        self.get(kind)?.lookup(d)
    }

    pub fn delta(&self, d: f64) -> Result<f64> {
        self.lookup(TableKind::Delta, d)
    }

    pub fn bgi(&self, d: f64) -> Result<f64> {
        self.lookup(TableKind::Bgi, d)
    }

    pub fn triangle(&self, d: f64) -> Result<f64> {
        self.lookup(TableKind::Triangle, d)
    }

    pub fn ek_diameter(&self, d: f64) -> Result<f64> {
        self.lookup(TableKind::EkDiameter, d)
    }

    pub fn centers(&self, d: f64) -> Result<f64> {
        self.lookup(TableKind::Centers, d)
    }

    pub fn flips(&self, d: f64) -> Result<f64> {
        self.lookup(TableKind::Flips, d)
    }

    /// `K = B_D + δ_D`, both read at the same grid value.
    pub fn k(&self, d: f64) -> Result<f64> {
        let g = self.get(TableKind::Delta)?.grid_d(d)?;
        Ok(self.bgi(g)? + self.delta(g)?)
    }

    fn build(&self, kind: TableKind) -> Result<ConstantTable> {
        let mut observed = Vec::new();
        let mut counts = Vec::new();
        for &d in &D_GRID {
            let (o, n) = match kind {
                TableKind::Delta => sweep_delta(&self.space, d)?,
                TableKind::Bgi => sweep_bgi(&self.space, d)?,
                TableKind::Triangle => sweep_triangle(&self.space, d)?,
                TableKind::EkDiameter => self.sweep_ek_diameter(d)?,
                TableKind::Centers => self.sweep_centers(d)?,
                TableKind::Flips => sweep_flips(&self.space, d)?,
            };
            observed.push(o);
            counts.push(n);
        }
        Ok(ConstantTable::from_observed(kind, &self.space, observed, counts))
    }

    fn sweep_ek_diameter(&self, d: f64) -> Result<(f64, usize)> {
        let k = self.k(d)?;
        let classes = triangle_classes(&self.space, d)?;
        let diams = classes
            .par_iter()
            .map(|t| {
                let e = ek_set(&self.space, t, k, k / 16.0)?;
                diameter(&self.space, &e.samples)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok((max_of(&diams), diams.len()))
    }

    fn sweep_centers(&self, d: f64) -> Result<(f64, usize)> {
        const SAMPLES: usize = 300;
        let quads = quad_classes(&self.space, d)?;
        if quads.is_empty() {
            return Ok((0.0, 0));
        }
        let pi = BarycenterMap::new(&self.space, d, self)?;
        let gaps = (0..SAMPLES)
            .map(|i| {
                let mut rng = stream_rng(TABLE_SEED, i as u64);
                let mut t = quads[rng.gen_range(0..quads.len())];
                t.shuffle(&mut rng);
                let [a, b, c, e] = t;
                let cr = cross_ratio_value(&self.space, a, b, c, e)?.abs();
                let p = pi.pi([a, b, c])?;
                let q = pi.pi([a, c, e])?;
                Ok((self.space.distance(p, q)? - cr).abs())
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok((max_of(&gaps), gaps.len()))
    }
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// Lattice offsets `o ≠ 0` with `|o| ≤ d` that are lexicographically positive.
pub(crate) fn positive_offsets(d: f64) -> Vec<(i64, i64)> {
    let r = (d + EPS_GEOM).floor() as i64;
    let mut out = Vec::new();
    for m in 0..=r {
        for n in -r..=r {
            if (m, n) > (0, 0) && within(&[0, 0], &[m, n], d) {
                out.push((m, n));
            }
        }
    }
    out
}

fn within(a: &[i64; 2], b: &[i64; 2], d: f64) -> bool {
    euclid([a[0] as f64, a[1] as f64], [b[0] as f64, b[1] as f64]) <= d + EPS_GEOM
}

fn tree_ends(space: &ModelSpace) -> Vec<BoundaryPoint> {
    space
        .tree()
        .map(|t| t.ends().iter().map(|&leaf| BoundaryPoint::TreeEnd { leaf }).collect())
        .unwrap_or_default()
}

/// Pairwise constants of all tree ends, as a lookup closure.
fn tree_pair_matrix(space: &ModelSpace) -> Result<(Vec<BoundaryPoint>, Vec<Vec<f64>>)> {
    let ends = tree_ends(space);
    let n = ends.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let c = pair_constant(space, ends[i], ends[j])?;
            m[i][j] = c;
            m[j][i] = c;
        }
    }
    Ok((ends, m))
}

/// Ordered pairs `(a, b)` with `D`-contracting line, up to translation.
pub(crate) fn pair_classes(space: &ModelSpace, d: f64) -> Result<Vec<[BoundaryPoint; 2]>> {
    match space {
        ModelSpace::LatticeRayPlane => Ok(positive_offsets(d)
            .into_iter()
            .map(|(m, n)| [BoundaryPoint::lattice(0, 0), BoundaryPoint::lattice(m, n)])
            .collect()),
        ModelSpace::MetricTree(_) => {
            let (ends, m) = tree_pair_matrix(space)?;
            let mut out = Vec::new();
            for i in 0..ends.len() {
                for j in i + 1..ends.len() {
                    if m[i][j] <= d + EPS_GEOM {
                        out.push([ends[i], ends[j]]);
                    }
                }
            }
            Ok(out)
        }
        ModelSpace::EuclideanPlane => Err(Error::NoBoundary(space.kind_name())),
    }
}

/// `D`-triangles up to translation, each sorted with its smallest vertex at
/// the origin in the lattice-ray plane.
pub fn triangle_classes(space: &ModelSpace, d: f64) -> Result<Vec<[BoundaryPoint; 3]>> {
    tuple_classes::<3>(space, d)
}

pub(crate) fn quad_classes(space: &ModelSpace, d: f64) -> Result<Vec<[BoundaryPoint; 4]>> {
    tuple_classes::<4>(space, d)
}

type PairTest = Box<dyn Fn(usize, usize) -> bool>;

fn tuple_classes<const N: usize>(space: &ModelSpace, d: f64) -> Result<Vec<[BoundaryPoint; N]>> {
    let (points, ok): (Vec<BoundaryPoint>, PairTest) = match space {
        ModelSpace::LatticeRayPlane => {
            let mut pts = vec![[0i64, 0i64]];
            pts.extend(positive_offsets(d).into_iter().map(|(m, n)| [m, n]));
            let bps = pts.iter().map(|p| BoundaryPoint::lattice(p[0], p[1])).collect();
            (bps, Box::new(move |i, j| within(&pts[i], &pts[j], d)))
        }
        ModelSpace::MetricTree(_) => {
            let (ends, m) = tree_pair_matrix(space)?;
            (ends, Box::new(move |i, j| m[i][j] <= d + EPS_GEOM))
        }
        ModelSpace::EuclideanPlane => return Err(Error::NoBoundary(space.kind_name())),
    };
    let lattice = matches!(space, ModelSpace::LatticeRayPlane);
    let mut out = Vec::new();
    let mut idx = [0usize; N];
    fn rec<const N: usize>(
        k: usize,
        start: usize,
        n: usize,
        idx: &mut [usize; N],
        ok: &dyn Fn(usize, usize) -> bool,
        emit: &mut dyn FnMut(&[usize; N]),
    ) {
        if k == N {
            emit(idx);
            return;
        }
        for i in start..n {
            if (0..k).all(|j| ok(idx[j], i)) {
                idx[k] = i;
                rec(k + 1, i + 1, n, idx, ok, emit);
            }
        }
    }
    // The lattice family is anchored at the origin, which is index 0.
    let first_range = if lattice { 1 } else { points.len() };
    for first in 0..first_range.min(points.len()) {
        idx[0] = first;
        rec(1, first + 1, points.len(), &mut idx, &*ok, &mut |ix| {
            out.push(std::array::from_fn(|j| points[ix[j]]));
        });
    }
    Ok(out)
}

/// All orderings of three items.
fn orderings3<T: Copy>(t: [T; 3]) -> [[T; 3]; 6] {
    let [a, b, c] = t;
    [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]]
}

fn sweep_delta(space: &ModelSpace, d: f64) -> Result<(f64, usize)> {
    const MIXED_PER_CLASS: usize = 2;
    let classes = triangle_classes(space, d)?;
    let mut configs: Vec<[Location; 3]> = Vec::new();
    for (ci, t) in classes.iter().enumerate() {
        for o in orderings3(*t) {
            configs.push(o.map(Location::Ideal));
        }
        if matches!(space, ModelSpace::LatticeRayPlane) {
            // Replace one vertex by a plane point at a half-integer offset
            // within 2D of the origin.
            let mut rng = stream_rng(TABLE_SEED, ci as u64);
            let r = (4.0 * d) as i64;
            for _ in 0..MIXED_PER_CLASS {
                let q = ModelPoint::plane(rng.gen_range(-r..=r) as f64 / 2.0, rng.gen_range(-r..=r) as f64 / 2.0);
                let slot = rng.gen_range(0..3);
                let mut v = t.map(Location::Ideal);
                v[slot] = Location::Point(q);
                configs.extend(orderings3(v));
            }
        }
    }
    let worst = configs
        .par_iter()
        .map(|&[a, b, c]| match slim_violation(space, a, b, c) {
            Ok((w, _)) => Ok(w),
            Err(Error::Degenerate(_)) => Ok(0.0),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((max_of(&worst), worst.len()))
}

fn sweep_bgi(space: &ModelSpace, d: f64) -> Result<(f64, usize)> {
    const BETAS: usize = 96;
    let gammas = pair_classes(space, d)?;
    let ends = tree_ends(space);
    let jobs: Vec<(usize, usize)> = (0..gammas.len())
        .flat_map(|g| (0..BETAS).map(move |j| (g, j)))
        .collect();
    let lines = gammas
        .iter()
        .map(|&[a, b]| line(space, a, b))
        .collect::<Result<Vec<_>>>()?;
    let vals = jobs
        .par_iter()
        .map(|&(g, j)| {
            let mut rng = stream_rng(TABLE_SEED, (g * BETAS + j) as u64);
            let pick = |rng: &mut rand_chacha::ChaCha8Rng| -> Location {
                match space {
                    ModelSpace::LatticeRayPlane => {
                        let r = (2.0 * d).ceil() as i64 + 1;
                        if rng.gen_bool(0.5) {
                            Location::Ideal(BoundaryPoint::lattice(rng.gen_range(-r..=r), rng.gen_range(-r..=r)))
                        } else {
                            Location::Point(ModelPoint::plane(
                                rng.gen_range(-2 * r..=2 * r) as f64 / 2.0,
                                rng.gen_range(-2 * r..=2 * r) as f64 / 2.0,
                            ))
                        }
                    }
                    _ => Location::Ideal(ends[rng.gen_range(0..ends.len())]),
                }
            };
            let (x, y) = (pick(&mut rng), pick(&mut rng));
            let beta = match geodesic(space, x, y) {
                Ok(b) => b,
                Err(Error::SameEndpoints) => return Ok(0.0),
                Err(e) => return Err(e),
            };
            Ok(verify_bounded_geodesic_image(space, &lines[g], &beta, 0.0)?.required_bound())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((max_of(&vals), vals.len()))
}

fn sweep_triangle(space: &ModelSpace, d: f64) -> Result<(f64, usize)> {
    let mut vals = Vec::new();
    match space {
        ModelSpace::LatticeRayPlane => {
            let mut disc: Vec<(i64, i64)> = positive_offsets(d);
            disc.extend(disc.clone().into_iter().map(|(m, n)| (-m, -n)));
            for (i, &(m, n)) in disc.iter().enumerate() {
                for &(s, t) in &disc[i + 1..] {
                    vals.push(pair_constant(
                        space,
                        BoundaryPoint::lattice(m, n),
                        BoundaryPoint::lattice(s, t),
                    )?);
                }
            }
        }
        _ => {
            for [a, b, c] in triangle_classes(space, d)? {
                for (x, y) in [(a, b), (b, c), (a, c)] {
                    vals.push(pair_constant(space, x, y)?);
                }
            }
        }
    }
    Ok((max_of(&vals), vals.len()))
}

fn sweep_flips(space: &ModelSpace, d: f64) -> Result<(f64, usize)> {
    let quads = quad_classes(space, d)?;
    let vals = quads
        .par_iter()
        .map(|q| {
            let mut worst = 0.0f64;
            for p in permutations4(*q) {
                let v = small_flip_values(space, p)?;
                worst = worst.max(v.into_iter().fold(f64::INFINITY, f64::min));
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((max_of(&vals), vals.len() * 24))
}

fn permutations4<T: Copy>(t: [T; 4]) -> Vec<[T; 4]> {
    let mut out = Vec::with_capacity(24);
    for i in 0..4 {
        let rest: Vec<T> = (0..4).filter(|&j| j != i).map(|j| t[j]).collect();
        for o in orderings3([rest[0], rest[1], rest[2]]) {
            out.push([t[i], o[0], o[1], o[2]]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_and_classes() {
        assert_eq!(positive_offsets(1.0), vec![(0, 1), (1, 0)]);
        let lrp = ModelSpace::LatticeRayPlane;
        let t1 = triangle_classes(&lrp, 1.0).unwrap();
        assert!(t1.is_empty());
        let t = triangle_classes(&lrp, 2f64.sqrt()).unwrap();
        // Right isoceles triangles with the right angle anywhere, origin lex-smallest.
        assert_eq!(t.len(), 4);
        for tri in triangle_classes(&lrp, 2.0).unwrap() {
            assert_eq!(tri[0], BoundaryPoint::lattice(0, 0));
            assert!(tri[1] < tri[2]);
        }
    }

    #[test]
    fn lookups_are_monotone_steps() {
        let t = ConstantTable::from_observed(
            TableKind::Delta,
            &ModelSpace::LatticeRayPlane,
            vec![1.0, 0.5, 3.0, 2.0],
            vec![1; 4],
        );
        assert_eq!(t.values[1], t.values[0]);
        assert!(t.values.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(t.lookup(1.5).unwrap(), t.values[1]);
        assert_eq!(t.lookup(2.0).unwrap(), t.values[1]);
        assert!(matches!(t.lookup(4.5), Err(Error::TableOutOfRange { .. })));
        assert!(t.lookup(-1.0).is_err());
    }

    #[test]
    fn permutations_are_distinct() {
        let mut p = permutations4([1, 2, 3, 4]);
        p.sort();
        p.dedup();
        assert_eq!(p.len(), 24);
    }

    #[test]
    fn triangle_table_is_exact_in_the_lattice() {
        let (o, _) = sweep_triangle(&ModelSpace::LatticeRayPlane, 2.0).unwrap();
        assert_eq!(o, 4.0);
    }
}
