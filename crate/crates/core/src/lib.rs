//! Contracting geodesics, Morse-boundary cross-ratios and boundary-map
//! extension on explicit model CAT(0) spaces.

pub mod boundary;
pub mod contracting;
pub mod enclosing;
pub mod error;
pub mod extension;
pub mod path;
pub mod repro;
pub mod sampling;
pub mod space;
pub mod tables;
pub mod tree;

pub use boundary::{BoundaryMap, CrossRatio, MapSpec, StratumTuple, Verdict};
pub use error::{Error, Result};
pub use extension::{extend, BarycenterMap, EkSet, ExtendedMap};
pub use path::{geodesic, line, GeodesicPath, Piece};
pub use space::{BoundaryPoint, LatticeBox, LatticeIsometry, Location, ModelPoint, ModelSpace, Window, EPS_GEOM};
pub use tables::{TableKind, TableSet};
pub use tree::MetricTree;
