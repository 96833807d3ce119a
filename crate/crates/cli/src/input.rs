//! Parsing of space, map and geodesic descriptions given on the command line.

use std::path::Path;

use anyhow::{anyhow, Context, Result};
use morselab_core::{BoundaryMap, Location, ModelSpace};
use serde::de::DeserializeOwned;
use serde::Deserialize;

/// Reads `arg` as inline JSON if it starts with `{`, otherwise as a file path.
fn json_text(arg: &str, what: &str) -> Result<String> {
    if arg.trim_start().starts_with('{') {
        return Ok(arg.to_string());
    }
    std::fs::read_to_string(Path::new(arg)).with_context(|| format!("cannot read {what} file `{arg}`"))
}

/// Deserializes `text`, reporting the line and column of any syntax error.
pub fn parse_json<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text)
        .map_err(|e| anyhow!("cannot parse {what} at line {}, column {}: {e}", e.line(), e.column()))
}

/// `lattice_ray_plane`, `euclidean_plane`, inline JSON or a JSON file.
pub fn space(arg: &str) -> Result<ModelSpace> {
    match arg {
        "lattice_ray_plane" => Ok(ModelSpace::LatticeRayPlane),
        "euclidean_plane" => Ok(ModelSpace::EuclideanPlane),
        _ => parse_json(&json_text(arg, "space")?, "space description"),
    }
}

/// `identity`, `paper_swap`, inline JSON or a JSON file.
pub fn map(arg: &str) -> Result<BoundaryMap> {
    match arg {
        "identity" => Ok(BoundaryMap::identity()),
        "paper_swap" => Ok(BoundaryMap::paper_swap()),
        _ => Ok(BoundaryMap::from_spec(parse_json(
            &json_text(arg, "map")?,
            "map description",
        )?)?),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodesicSpec {
    pub from: Location,
    pub to: Location,
}

/// `{"from": .., "to": ..}` where each end is a point or `{"ideal": ..}`.
pub fn geodesic(arg: &str) -> Result<GeodesicSpec> {
    parse_json(&json_text(arg, "geodesic")?, "geodesic spec")
}

/// A triangle of lattice rays, `[[m, n], [m, n], [m, n]]`.
pub fn lattice_triangle(arg: &str) -> Result<[[i64; 2]; 3]> {
    parse_json(arg, "triangle")
}
