//! The swap homeomorphism of the lattice-ray plane boundary that fails to be
//! 2-stable, tabulated with exact constants.

use serde::{Deserialize, Serialize};

use crate::boundary::{cross_ratio_value, BoundaryMap};
use crate::contracting::certify_pair;
use crate::error::{Error, Result};
use crate::space::{BoundaryPoint, ModelSpace};

/// One row of the table: `α_n` is the line from `r_{n,0}` to `r_{n,1}`, and
/// the cross-ratios are of `(r_{n,0}, r_{n+1,0}, r_{n,1}, r_{n+1,1})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReproRow {
    pub n: u32,
    /// Contracting constant of `α_n`.
    pub d_alpha: f64,
    /// Contracting constant of the line between the swapped endpoints.
    pub d_f_alpha: f64,
    pub cr_before: f64,
    pub cr_after: f64,
}

pub fn repro_example(n_max: u32) -> Result<Vec<ReproRow>> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let space = ModelSpace::LatticeRayPlane;
    let f = BoundaryMap::paper_swap();
    let r = BoundaryPoint::lattice;
    (1..=n_max)
        .map(|n| {
            let k = n as i64;
            let fw = |b| f.forward(b);
            let t = [r(k, 0), r(k + 1, 0), r(k, 1), r(k + 1, 1)];
            let ft = [fw(t[0])?, fw(t[1])?, fw(t[2])?, fw(t[3])?];
            Ok(ReproRow {
                n,
                d_alpha: certify_pair(&space, t[0], t[2])?.d,
                d_f_alpha: certify_pair(&space, ft[0], ft[2])?.d,
                cr_before: cross_ratio_value(&space, t[0], t[1], t[2], t[3])?.abs(),
                cr_after: cross_ratio_value(&space, ft[0], ft[1], ft[2], ft[3])?.abs(),
            })
        })
        .collect()
}
