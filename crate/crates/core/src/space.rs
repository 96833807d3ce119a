//! Model CAT(0) spaces with closed-form metrics.
//!
//! Three spaces are provided:
//!
//! * the lattice-ray plane: the Euclidean plane with a vertical ray glued at
//!   every integer lattice point, carrying the induced length metric;
//! * a finite metric tree with an infinite ray glued at designated vertices;
//! * the bare Euclidean plane, whose Morse boundary is empty.
//!
//! Points are tagged by chart. All equality goes through [`ModelSpace::canonical`],
//! which identifies the foot of a ray with the vertex or lattice point it is
//! glued to.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::MetricTree;

/// Tolerance for point equality after canonicalization.
pub const EPS_GEOM: f64 = 1e-9;

/// A location in a model space, tagged by chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "chart", rename_all = "snake_case")]
pub enum ModelPoint {
    /// A point of the plane (lattice-ray plane or Euclidean plane).
    Plane { x: f64, y: f64 },
    /// A point at height `h` on the ray glued at the lattice point `(m, n)`.
    Ray { m: i64, n: i64, h: f64 },
    /// A vertex of a metric tree.
    TreeVertex { v: usize },
    /// The point at distance `t` from `u` along the tree edge `{u, v}`.
    TreeEdge { u: usize, v: usize, t: f64 },
    /// A point at height `h` on the end ray glued at vertex `leaf`.
    TreeRay { leaf: usize, h: f64 },
}

impl ModelPoint {
    pub const fn plane(x: f64, y: f64) -> Self {
        ModelPoint::Plane { x, y }
    }

    pub const fn ray(m: i64, n: i64, h: f64) -> Self {
        ModelPoint::Ray { m, n, h }
    }

    pub fn chart_name(&self) -> &'static str {
        match self {
            ModelPoint::Plane { .. } => "plane",
            ModelPoint::Ray { .. } => "ray",
            ModelPoint::TreeVertex { .. } => "tree_vertex",
            ModelPoint::TreeEdge { .. } => "tree_edge",
            ModelPoint::TreeRay { .. } => "tree_ray",
        }
    }

    /// Plane coordinates of the point or of the foot of its ray.
    pub fn base(&self) -> Option<[f64; 2]> {
        match *self {
            ModelPoint::Plane { x, y } => Some([x, y]),
            ModelPoint::Ray { m, n, .. } => Some([m as f64, n as f64]),
            _ => None,
        }
    }

    /// Height above the plane (zero for plane points).
    pub fn lift(&self) -> f64 {
        match *self {
            ModelPoint::Ray { h, .. } | ModelPoint::TreeRay { h, .. } => h,
            _ => 0.0,
        }
    }

    /// The ray this point lies on strictly above its foot, with its height.
    pub fn on_ray(&self) -> Option<(BoundaryPoint, f64)> {
        match *self {
            ModelPoint::Ray { m, n, h } if h > 0.0 => Some((BoundaryPoint::Lattice { m, n }, h)),
            ModelPoint::TreeRay { leaf, h } if h > 0.0 => Some((BoundaryPoint::TreeEnd { leaf }, h)),
            _ => None,
        }
    }

    /// Apply a lattice isometry; tree points are returned unchanged.
    pub fn transformed(&self, g: &LatticeIsometry) -> Self {
        match *self {
            ModelPoint::Plane { x, y } => {
                let [x, y] = g.apply_f([x, y]);
                ModelPoint::Plane { x, y }
            }
            ModelPoint::Ray { m, n, h } => {
                let (m, n) = g.apply_i(m, n);
                ModelPoint::Ray { m, n, h }
            }
            other => other,
        }
    }
}

impl fmt::Display for ModelPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ModelPoint::Plane { x, y } => write!(f, "({x}, {y})"),
            ModelPoint::Ray { m, n, h } => write!(f, "r_{{{m},{n}}}@{h}"),
            ModelPoint::TreeVertex { v } => write!(f, "v{v}"),
            ModelPoint::TreeEdge { u, v, t } => write!(f, "v{u}-v{v}@{t}"),
            ModelPoint::TreeRay { leaf, h } => write!(f, "end{leaf}@{h}"),
        }
    }
}

/// A point of the Morse boundary.
///
/// In the lattice-ray plane the boundary is the discrete set of vertical rays,
/// indexed by their lattice point. In a metric tree it is the set of glued end
/// rays. The Euclidean plane has none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundaryPoint {
    Lattice { m: i64, n: i64 },
    TreeEnd { leaf: usize },
}

impl BoundaryPoint {
    pub const fn lattice(m: i64, n: i64) -> Self {
        BoundaryPoint::Lattice { m, n }
    }

    /// The point at height `h` on the ray representing this boundary point.
    pub fn ray_point(&self, h: f64) -> ModelPoint {
        match *self {
            BoundaryPoint::Lattice { m, n } => ModelPoint::Ray { m, n, h },
            BoundaryPoint::TreeEnd { leaf } => ModelPoint::TreeRay { leaf, h },
        }
    }

    /// The point the representing ray is glued to.
    pub fn foot(&self) -> ModelPoint {
        match *self {
            BoundaryPoint::Lattice { m, n } => ModelPoint::Plane {
                x: m as f64,
                y: n as f64,
            },
            BoundaryPoint::TreeEnd { leaf } => ModelPoint::TreeVertex { v: leaf },
        }
    }

    pub fn lattice_index(&self) -> Option<(i64, i64)> {
        match *self {
            BoundaryPoint::Lattice { m, n } => Some((m, n)),
            BoundaryPoint::TreeEnd { .. } => None,
        }
    }

    pub fn transformed(&self, g: &LatticeIsometry) -> Self {
        match *self {
            BoundaryPoint::Lattice { m, n } => {
                let (m, n) = g.apply_i(m, n);
                BoundaryPoint::Lattice { m, n }
            }
            other => other,
        }
    }
}

impl fmt::Display for BoundaryPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BoundaryPoint::Lattice { m, n } => write!(f, "r_{{{m},{n}}}"),
            BoundaryPoint::TreeEnd { leaf } => write!(f, "end_{leaf}"),
        }
    }
}

/// A point of `X ∪ ∂_*X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "LocationRepr", into = "LocationRepr")]
pub enum Location {
    Point(ModelPoint),
    Ideal(BoundaryPoint),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LocationRepr {
    Ideal { ideal: BoundaryPoint },
    Point(ModelPoint),
}

impl From<LocationRepr> for Location {
    fn from(r: LocationRepr) -> Self {
        match r {
            LocationRepr::Ideal { ideal } => Location::Ideal(ideal),
            LocationRepr::Point(p) => Location::Point(p),
        }
    }
}

impl From<Location> for LocationRepr {
    fn from(l: Location) -> Self {
        match l {
            Location::Ideal(ideal) => LocationRepr::Ideal { ideal },
            Location::Point(p) => LocationRepr::Point(p),
        }
    }
}

impl From<ModelPoint> for Location {
    fn from(p: ModelPoint) -> Self {
        Location::Point(p)
    }
}

impl From<BoundaryPoint> for Location {
    fn from(b: BoundaryPoint) -> Self {
        Location::Ideal(b)
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Point(p) => p.fmt(f),
            Location::Ideal(b) => b.fmt(f),
        }
    }
}

/// One of the supported model spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpace {
    LatticeRayPlane,
    MetricTree(MetricTree),
    EuclideanPlane,
}

impl ModelSpace {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelSpace::LatticeRayPlane => "lattice_ray_plane",
            ModelSpace::MetricTree(_) => "metric_tree",
            ModelSpace::EuclideanPlane => "euclidean_plane",
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn tree(&self) -> Option<&MetricTree> {
        match self {
            ModelSpace::MetricTree(t) => Some(t),
            _ => None,
        }
    }

    /// Validate `p` and bring it to canonical form.
    ///
    /// `Ray(m, n, 0)` becomes `Plane(m, n)`, a tree edge point at either end
    /// becomes the vertex, and tree edges are oriented from the smaller vertex.
    pub fn canonical(&self, p: ModelPoint) -> Result<ModelPoint> {
        match self {
            ModelSpace::LatticeRayPlane => match p {
                ModelPoint::Plane { x, y } => {
                    if x.is_finite() && y.is_finite() {
                        Ok(p)
                    } else {
                        Err(Error::InvalidPoint(format!("non-finite plane point {p}")))
                    }
                }
                ModelPoint::Ray { m, n, h } => {
                    if !h.is_finite() || h < 0.0 {
                        Err(Error::InvalidPoint(format!(
                            "ray height must be finite and >= 0, got {h}"
                        )))
                    } else if h == 0.0 {
                        Ok(ModelPoint::Plane {
                            x: m as f64,
                            y: n as f64,
                        })
                    } else {
                        Ok(p)
                    }
                }
                other => Err(Error::ChartMismatch {
                    chart: other.chart_name(),
                    space: self.kind_name(),
                }),
            },
            ModelSpace::EuclideanPlane => match p {
                ModelPoint::Plane { x, y } if x.is_finite() && y.is_finite() => Ok(p),
                ModelPoint::Plane { .. } => Err(Error::InvalidPoint(format!("non-finite plane point {p}"))),
                other => Err(Error::ChartMismatch {
                    chart: other.chart_name(),
                    space: self.kind_name(),
                }),
            },
            ModelSpace::MetricTree(t) => t.canonical(p),
        }
    }

    /// Points are equal when their canonical forms are within [`EPS_GEOM`].
    pub fn same_point(&self, p: ModelPoint, q: ModelPoint) -> Result<bool> {
        Ok(self.distance(p, q)? <= EPS_GEOM)
    }

    pub fn check_boundary(&self, b: BoundaryPoint) -> Result<()> {
        match (self, b) {
            (ModelSpace::LatticeRayPlane, BoundaryPoint::Lattice { .. }) => Ok(()),
            (ModelSpace::MetricTree(t), BoundaryPoint::TreeEnd { leaf }) if t.is_end(leaf) => Ok(()),
            (ModelSpace::EuclideanPlane, _) => Err(Error::NoBoundary(self.kind_name())),
            _ => Err(Error::UnknownBoundaryPoint(b)),
        }
    }

    pub fn check_location(&self, l: Location) -> Result<Location> {
        match l {
            Location::Point(p) => Ok(Location::Point(self.canonical(p)?)),
            Location::Ideal(b) => {
                self.check_boundary(b)?;
                Ok(l)
            }
        }
    }

    /// The metric of the space.
    pub fn distance(&self, p: ModelPoint, q: ModelPoint) -> Result<f64> {
        let p = self.canonical(p)?;
        let q = self.canonical(q)?;
        Ok(match self {
            ModelSpace::LatticeRayPlane => lattice_distance(p, q),
            ModelSpace::EuclideanPlane => {
                let (a, b) = (p.base().unwrap_or([0.0; 2]), q.base().unwrap_or([0.0; 2]));
                euclid(a, b)
            }
            ModelSpace::MetricTree(t) => t.distance_canonical(p, q),
        })
    }

    /// All boundary points inside `window`, each exactly once, in sorted order.
    pub fn enumerate_boundary(&self, window: &Window) -> Result<Vec<BoundaryPoint>> {
        match (self, window) {
            (ModelSpace::EuclideanPlane, _) => {
                if window.is_empty() {
                    return Err(Error::EmptyWindow);
                }
                Ok(Vec::new())
            }
            (ModelSpace::LatticeRayPlane, Window::Lattice(b)) => {
                if b.is_empty() {
                    return Err(Error::EmptyWindow);
                }
                Ok(b.points().map(|(m, n)| BoundaryPoint::Lattice { m, n }).collect())
            }
            (ModelSpace::MetricTree(t), Window::TreeDepth(depth)) => Ok(t
                .ends()
                .iter()
                .filter(|&&leaf| t.hop_depth(leaf) <= *depth)
                .map(|&leaf| BoundaryPoint::TreeEnd { leaf })
                .collect()),
            _ => Err(Error::InvalidArgument(format!(
                "window kind does not match a {} space",
                self.kind_name()
            ))),
        }
    }
}

pub(crate) fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Distance in the lattice-ray plane between canonical points.
fn lattice_distance(p: ModelPoint, q: ModelPoint) -> f64 {
    if let (ModelPoint::Ray { m, n, h }, ModelPoint::Ray { m: s, n: t, h: k }) = (p, q) {
        if (m, n) == (s, t) {
            return (h - k).abs();
        }
    }
    let (a, b) = (p.base().expect("plane chart"), q.base().expect("plane chart"));
    p.lift() + q.lift() + euclid(a, b)
}

/// A finite box of lattice indices `[m0, m1] × [n0, n1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeBox {
    pub m: (i64, i64),
    pub n: (i64, i64),
}

impl LatticeBox {
    /// The box `[-half, half]²`.
    pub fn centered(half: i64) -> Self {
        LatticeBox {
            m: (-half, half),
            n: (-half, half),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.m.0 > self.m.1 || self.n.0 > self.n.1
    }

    pub fn contains(&self, m: i64, n: i64) -> bool {
        (self.m.0..=self.m.1).contains(&m) && (self.n.0..=self.n.1).contains(&n)
    }

    pub fn len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            ((self.m.1 - self.m.0 + 1) * (self.n.1 - self.n.0 + 1)) as usize
        }
    }

    pub fn points(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        (self.m.0..=self.m.1).flat_map(move |m| (self.n.0..=self.n.1).map(move |n| (m, n)))
    }
}

/// A finite region of the boundary to enumerate or sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Lattice(LatticeBox),
    /// Ends whose vertex is at most this many edges from vertex 0.
    TreeDepth(usize),
}

impl Window {
    pub fn is_empty(&self) -> bool {
        match self {
            Window::Lattice(b) => b.is_empty(),
            Window::TreeDepth(_) => false,
        }
    }

    /// The window with its size doubled.
    pub fn doubled(&self) -> Window {
        match *self {
            Window::Lattice(b) => Window::Lattice(LatticeBox {
                m: (b.m.0 * 2, b.m.1 * 2),
                n: (b.n.0 * 2, b.n.1 * 2),
            }),
            Window::TreeDepth(d) => Window::TreeDepth((d * 2).max(1)),
        }
    }

    /// A scalar size used in reports.
    pub fn size(&self) -> f64 {
        match self {
            Window::Lattice(b) => ((b.m.1 - b.m.0).max(b.n.1 - b.n.0) as f64) / 2.0,
            Window::TreeDepth(d) => *d as f64,
        }
    }
}

/// An isometry of the lattice-ray plane: `p ↦ R p + (dx, dy)` where `R` is
/// one of the eight symmetries of the square lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeIsometry {
    /// Integer linear part, row-major `[[a, b], [c, d]]`.
    pub linear: [[i64; 2]; 2],
    pub dx: i64,
    pub dy: i64,
}

impl LatticeIsometry {
    pub const IDENTITY: LatticeIsometry = LatticeIsometry {
        linear: [[1, 0], [0, 1]],
        dx: 0,
        dy: 0,
    };

    pub fn translation(dx: i64, dy: i64) -> Self {
        LatticeIsometry {
            dx,
            dy,
            ..Self::IDENTITY
        }
    }

    /// Rotation by a quarter turn about the origin.
    pub fn rotation() -> Self {
        LatticeIsometry {
            linear: [[0, -1], [1, 0]],
            dx: 0,
            dy: 0,
        }
    }

    /// Reflection `(x, y) ↦ (-x, y)`.
    pub fn reflect_x() -> Self {
        LatticeIsometry {
            linear: [[-1, 0], [0, 1]],
            dx: 0,
            dy: 0,
        }
    }

    /// Reflection `(x, y) ↦ (x, -y)`.
    pub fn reflect_y() -> Self {
        LatticeIsometry {
            linear: [[1, 0], [0, -1]],
            dx: 0,
            dy: 0,
        }
    }

    pub fn apply_i(&self, m: i64, n: i64) -> (i64, i64) {
        let [[a, b], [c, d]] = self.linear;
        (a * m + b * n + self.dx, c * m + d * n + self.dy)
    }

    pub fn apply_f(&self, p: [f64; 2]) -> [f64; 2] {
        let [[a, b], [c, d]] = self.linear;
        [
            a as f64 * p[0] + b as f64 * p[1] + self.dx as f64,
            c as f64 * p[0] + d as f64 * p[1] + self.dy as f64,
        ]
    }

    pub fn inverse(&self) -> Self {
        // Orthogonal integer matrices invert by transposition.
        let [[a, b], [c, d]] = self.linear;
        let lin = [[a, c], [b, d]];
        let probe = LatticeIsometry {
            linear: lin,
            dx: 0,
            dy: 0,
        };
        let (tx, ty) = probe.apply_i(self.dx, self.dy);
        LatticeIsometry {
            linear: lin,
            dx: -tx,
            dy: -ty,
        }
    }
}
