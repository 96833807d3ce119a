use thiserror::Error;

use crate::space::BoundaryPoint;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("chart `{chart}` is not valid in a {space} space")]
    ChartMismatch { chart: &'static str, space: &'static str },

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("invalid space description: {0}")]
    InvalidSpace(String),

    #[error("the {0} space has no Morse boundary points")]
    NoBoundary(&'static str),

    #[error("boundary point {0} does not exist in this space")]
    UnknownBoundaryPoint(BoundaryPoint),

    #[error("geodesic endpoints coincide")]
    SameEndpoints,

    #[error("empty window")]
    EmptyWindow,

    #[error("{0} is an endpoint of the geodesic; its projection is undefined")]
    EndpointProjection(BoundaryPoint),

    #[error("nearest-point projection is not unique: minimizers {0} apart")]
    NonUniqueProjection(f64),

    #[error("expected a bi-infinite geodesic between lattice rays")]
    NotBiInfiniteLattice,

    #[error("no ball in the sampling window is disjoint from the geodesic")]
    NoDisjointBall,

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("tuple contains duplicate boundary points")]
    DuplicatePoints,

    #[error("side ({a}, {b}) has contracting constant {constant} > {bound}")]
    UncertifiedSide {
        a: String,
        b: String,
        constant: f64,
        bound: f64,
    },

    #[error("image pair ({a}, {b}) has contracting constant {constant} > {bound}")]
    ImageOutsideStratum {
        a: BoundaryPoint,
        b: BoundaryPoint,
        constant: f64,
        bound: f64,
    },

    #[error("no tuples of the requested stratum inside the window")]
    EmptyStratum,

    #[error("invalid boundary map: {0}")]
    InvalidMap(String),

    #[error("E_K set of {triangle} is empty at K = {k}")]
    EmptyEkSet { triangle: String, k: f64 },

    #[error("grid refinement moved the barycenter by {moved} (limit {limit})")]
    RefinementUnstable { moved: f64, limit: f64 },

    #[error("cannot take the barycenter of an empty cloud")]
    EmptyCloud,

    #[error("no triangle barycenter within R = {radius} of the query point; enlarge R")]
    EmptyPreimage { radius: f64 },

    #[error("constant table `{table}` has no entry covering D = {d}")]
    TableOutOfRange { table: String, d: f64 },

    #[error("every flip of {tuple} has cross-ratio above C1 = {bound} (smallest {smallest})")]
    FlipBound { tuple: String, smallest: f64, bound: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Hypothesis failures: a configuration lies outside the stratum or the
    /// map does not satisfy the assumptions of the construction.
    pub fn is_hypothesis_failure(&self) -> bool {
        matches!(
            self,
            Error::UncertifiedSide { .. }
                | Error::ImageOutsideStratum { .. }
                | Error::EmptyStratum
                | Error::EmptyPreimage { .. }
                | Error::TableOutOfRange { .. }
        )
    }

    /// Internal invariant violations: these indicate a bug in the model
    /// geometry rather than bad input.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(
            self,
            Error::NonUniqueProjection(_)
                | Error::EmptyEkSet { .. }
                | Error::RefinementUnstable { .. }
                | Error::FlipBound { .. }
        )
    }
}
