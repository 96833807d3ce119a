//! Fixed inputs shared by the benchmarks.

use morselab_core::{BoundaryPoint, ModelPoint};

/// `count` distinct lattice rays spread over a square of side `side`.
pub fn lattice_rays(count: usize, side: i64) -> Vec<BoundaryPoint> {
    (0..count as i64)
        .map(|i| BoundaryPoint::lattice((i * 7) % side - side / 2, (i * 13 / side) % side - side / 2))
        .collect()
}

/// Plane and ray points on a grid over `[-half, half]²`.
pub fn mixed_points(per_side: usize, half: f64) -> Vec<ModelPoint> {
    let step = 2.0 * half / (per_side.max(2) - 1) as f64;
    let mut out = Vec::with_capacity(2 * per_side * per_side);
    for i in 0..per_side {
        for j in 0..per_side {
            let (x, y) = (-half + i as f64 * step, -half + j as f64 * step);
            out.push(ModelPoint::plane(x, y));
            out.push(ModelPoint::ray(
                x.round() as i64,
                y.round() as i64,
                0.5 + (i + j) as f64 % 3.0,
            ));
        }
    }
    out
}

/// Four rays of a unit square at `(n, 0)`, the standard cross-ratio input.
pub fn square(n: i64) -> [BoundaryPoint; 4] {
    [
        BoundaryPoint::lattice(n, 0),
        BoundaryPoint::lattice(n + 1, 0),
        BoundaryPoint::lattice(n, 1),
        BoundaryPoint::lattice(n + 1, 1),
    ]
}
