//! Seeded random streams.
//!
//! Every sampling routine draws from ChaCha8 keyed by the caller's seed; work
//! item `i` reads stream `i`, so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` evenly spaced values covering `[lo, hi]`, endpoints included.
pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let n = n.max(2);
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

/// Minimum of a convex function on `[lo, hi]`: coarse scan, then golden-section
/// refinement around the best scan point. Returns `(argmin, min)`.
pub(crate) fn convex_min(lo: f64, hi: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    const SCAN: usize = 64;
    let xs: Vec<f64> = linspace(lo, hi, SCAN).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let i = (0..SCAN).min_by(|&a, &b| ys[a].total_cmp(&ys[b])).expect("scan");
    let mut best = (xs[i], ys[i]);
    let (mut a, mut b) = (xs[i.saturating_sub(1)], xs[(i + 1).min(SCAN - 1)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    for (x, y) in [(c, fc), (d, fd)] {
        if y < best.1 {
            best = (x, y);
        }
    }
    best
}
