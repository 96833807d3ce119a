//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use morselab_core::boundary::{
    cross_ratio_value, quasi_mobius_probe, sample_stratum_tuples, two_stable_probe, Verdict,
};
use morselab_core::contracting::{
    contracting_constant_exact, contracting_constant_sampled, verify_slim_triangle, SamplerConfig,
};
use morselab_core::extension::{
    boundary_agreement_probe, bounded_expansion, qi_probe, quasi_inverse_probe, select_radius, small_flip_select,
    BarycenterMap, ExtendedMap, QueryRegion,
};
use morselab_core::repro::repro_example;
use morselab_core::sampling::stream_rng;
use morselab_core::tables::triangle_classes;
use morselab_core::*;
use rand::seq::SliceRandom;
use rand::Rng;

const LRP: ModelSpace = ModelSpace::LatticeRayPlane;

// Pinned tolerances.
const SQRT_TOL: f64 = 1e-9;
const CR_TOL: f64 = 1e-9;
const GROWTH: f64 = 1.5;
const SAMPLED_LOW: f64 = 0.95;
const SAMPLED_HIGH: f64 = 1e-6;
const QI_RATIO: f64 = 1.2;
const LAMBDA_MAX: f64 = 1.2;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn r(m: i64, n: i64) -> BoundaryPoint {
    BoundaryPoint::lattice(m, n)
}

fn example_reproduction() -> Result<Outcome> {
    let rows = repro_example(10)?;
    let mut ok = rows.len() == 10;
    for row in &rows {
        let n = row.n as f64;
        let expect = (4.0 * n * n + 1.0).sqrt();
        ok &= row.d_alpha == 1.0;
        ok &= (row.d_f_alpha - expect).abs() <= SQRT_TOL && row.d_f_alpha > 2.0 * n;
    }
    let last = rows.last().expect("rows");
    check(
        ok,
        format!("n=10: D(alpha)={} D(f alpha)={:.9}", last.d_alpha, last.d_f_alpha),
    )
}

fn cross_ratio_blow_up() -> Result<Outcome> {
    let f = BoundaryMap::paper_swap();
    let mut ok = true;
    let mut worst = f64::INFINITY;
    for n in 1..=10i64 {
        let t = [r(n, 0), r(n + 1, 0), r(n, 1), r(n + 1, 1)];
        let before = cross_ratio_value(&LRP, t[0], t[1], t[2], t[3])?.abs();
        let i: Vec<_> = t.iter().map(|&b| f.forward(b)).collect::<Result<_>>()?;
        let after = cross_ratio_value(&LRP, i[0], i[1], i[2], i[3])?.abs();
        ok &= (before - 1.0).abs() <= CR_TOL && after > (2 * n - 1) as f64;
        ok &= (after - ((4 * n * n + 1) as f64).sqrt()).abs() <= CR_TOL;
        worst = worst.min(after - (2 * n - 1) as f64);
    }
    check(ok, format!("smallest margin |after| - (2n-1) = {worst:.6}"))
}

fn non_two_stable() -> Result<Outcome> {
    let rep = two_stable_probe(
        &LRP,
        &LRP,
        &BoundaryMap::paper_swap(),
        2.0,
        &Window::Lattice(LatticeBox::centered(8)),
        50_000,
        7,
    )?;
    let values: Vec<f64> = rep.windows.iter().map(|w| w.value).collect();
    let ratios: Vec<f64> = values.windows(2).map(|w| w[1] / w[0]).collect();
    let sizes: Vec<f64> = rep.windows.iter().map(|w| w.window).collect();
    let mut ok = rep.verdict.is_violation() && ratios.iter().all(|&q| q >= GROWTH) && sizes == [8.0, 16.0, 32.0];
    // The family (r_{n,0}, r_{n,1}) is in every window and alone already grows like 2n.
    let f = BoundaryMap::paper_swap();
    for (&n, &worst) in sizes.iter().zip(&values) {
        let n = n as i64;
        let c = contracting::pair_constant(&LRP, f.forward(r(n, 0))?, f.forward(r(n, 1))?)?;
        ok &= (c - ((4 * n * n + 1) as f64).sqrt()).abs() <= SQRT_TOL && c <= worst;
    }
    if let Verdict::Violation { witness } = &rep.verdict {
        for w in witness {
            println!("      witness {w}");
        }
    }
    check(ok, format!("image constants {values:?}, ratios {ratios:?}"))
}

fn sampled_vs_exact() -> Result<Outcome> {
    let mut rng = stream_rng(11, 0);
    let mut ok = true;
    let mut worst = f64::INFINITY;
    for i in 0..20 {
        let a = (rng.gen_range(-5..=5), rng.gen_range(-5..=5));
        let b = loop {
            let o: (i64, i64) = (rng.gen_range(-8..=8), rng.gen_range(-8..=8));
            let len = ((o.0 * o.0 + o.1 * o.1) as f64).sqrt();
            if o != (0, 0) && len <= 8.0 {
                break (a.0 + o.0, a.1 + o.1);
            }
        };
        let g = line(&LRP, r(a.0, a.1), r(b.0, b.1))?;
        let exact = contracting_constant_exact(&LRP, &g)?.d;
        let cfg = SamplerConfig {
            window: 4.0 * exact,
            balls: 10_000,
            samples_per_ball: 32,
            seed: i,
        };
        let sampled = contracting_constant_sampled(&LRP, &g, &cfg)?.d;
        ok &= sampled >= SAMPLED_LOW * exact && sampled <= exact + SAMPLED_HIGH;
        worst = worst.min(sampled / exact);
    }
    check(ok, format!("smallest sampled/exact ratio {worst:.6}"))
}

fn sample_triangle(rng: &mut impl Rng, d: f64) -> Result<[BoundaryPoint; 3]> {
    let classes = triangle_classes(&LRP, d)?;
    let g = LatticeIsometry::translation(rng.gen_range(-20..=20), rng.gen_range(-20..=20));
    let mut t = classes[rng.gen_range(0..classes.len())].map(|b| b.transformed(&g));
    t.shuffle(rng);
    Ok(t)
}

fn slim_triangles() -> Result<Outcome> {
    let tables = TableSet::shared(&LRP)?;
    let mut rng = stream_rng(13, 0);
    let mut ok = true;
    let mut margin = f64::INFINITY;
    for _ in 0..100 {
        let d = [2.0, 3.0, 4.0][rng.gen_range(0..3)];
        let [a, b, c] = sample_triangle(&mut rng, d)?;
        let delta = tables.delta(d)?;
        let rep = verify_slim_triangle(&LRP, a.into(), b.into(), c.into(), delta)?;
        ok &= rep.holds;
        margin = margin.min(delta - rep.worst_violation);
    }
    let mut tree_worst = 0.0f64;
    for seed in 0..4u64 {
        let mut rng = stream_rng(17, seed);
        let n = 8;
        let edges = (1..n)
            .map(|i| (rng.gen_range(0..i), i, rng.gen_range(0.5..3.0)))
            .collect();
        let tree = MetricTree::new(edges, None)?;
        let ends: Vec<BoundaryPoint> = tree
            .ends()
            .iter()
            .map(|&leaf| BoundaryPoint::TreeEnd { leaf })
            .collect();
        let space = ModelSpace::MetricTree(tree);
        for i in 0..ends.len() {
            for j in 0..ends.len() {
                for k in 0..ends.len() {
                    if i != j && j != k && i != k {
                        let rep = verify_slim_triangle(&space, ends[i].into(), ends[j].into(), ends[k].into(), 0.0)?;
                        tree_worst = tree_worst.max(rep.worst_violation);
                    }
                }
            }
        }
    }
    ok &= tree_worst == 0.0;
    check(
        ok,
        format!("smallest margin delta - worst = {margin:.4}; tree worst violation {tree_worst}"),
    )
}

fn flip_bound() -> Result<Outcome> {
    let window = Window::Lattice(LatticeBox::centered(12));
    let mut tuples = Vec::new();
    for (i, d) in [2.0, 3.0, 4.0].into_iter().enumerate() {
        let count = if i == 0 { 334 } else { 333 };
        for t in sample_stratum_tuples(&LRP, &window, d, count, 19 + i as u64)? {
            tuples.push((d, t));
        }
    }
    let mut rng = stream_rng(23, 0);
    let mut ok = tuples.len() >= 1000;
    let mut worst = 0.0f64;
    for (d, mut t) in tuples.iter().copied() {
        t.shuffle(&mut rng);
        match small_flip_select(&LRP, t, d) {
            Ok(c) => worst = worst.max(c.value / c.bound.max(f64::MIN_POSITIVE)),
            Err(e) => {
                println!("      {e}");
                ok = false;
            }
        }
    }
    check(ok, format!("{} tuples; largest value/C1 = {worst:.4}", tuples.len()))
}

fn isometry_quasi_mobius() -> Result<Outcome> {
    let mut ok = true;
    let mut details = Vec::new();
    for f in [
        BoundaryMap::translation(3, -2),
        BoundaryMap::translation(-5, 7),
        BoundaryMap::isometry(LatticeIsometry::rotation()),
    ] {
        let rep = quasi_mobius_probe(&LRP, &LRP, &f, 2.0, &Window::Lattice(LatticeBox::centered(4)), 1500, 29)?;
        let within = rep.within_linear(1.0);
        ok &= within && !rep.verdict.is_violation();
        details.push(format!(
            "{}: max excess {:.2e} slack {:.3}",
            f.label(),
            rep.max_excess,
            rep.slack
        ));
    }
    check(ok, details.join("; "))
}

struct Built {
    h: ExtendedMap,
    m: f64,
}

fn build(f: BoundaryMap, queries: &[ModelPoint], region: &QueryRegion) -> Result<Built> {
    let tables = TableSet::shared(&LRP)?;
    let pi = Arc::new(BarycenterMap::new(&LRP, 2.0, tables)?);
    let r = select_radius(&pi, queries)?;
    let h = ExtendedMap::from_parts(f, pi.clone(), pi, r);
    let consts = bounded_expansion(&h, region, 3.0, 200, 31)?;
    Ok(Built { h, m: consts.m })
}

fn extension_round_trip() -> Result<Outcome> {
    let region = QueryRegion::new(4.0);
    let queries = region.grid(&LRP, 1000);
    let mut ok = queries.len() >= 990;
    let mut details = Vec::new();
    for (f, g) in [
        (BoundaryMap::identity(), LatticeIsometry::IDENTITY),
        (BoundaryMap::translation(3, -2), LatticeIsometry::translation(3, -2)),
    ] {
        let b = build(f.clone(), &queries, &region)?;
        let evals = b.h.evaluate_all(&queries)?;
        let worst = evals
            .iter()
            .map(|e| LRP.distance(e.h, e.x.transformed(&g)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let bound = b.h.r() + b.m;
        let pi_diam = evals.iter().map(|e| e.pi_diameter).fold(0.0, f64::max);
        ok &= worst <= bound && pi_diam <= b.m;
        let hyx = ExtendedMap::from_parts(
            f.inverse_map(),
            b.h.pi_y().clone(),
            b.h.pi_x().clone(),
            b.h.r().max(b.m),
        );
        let mut disp = Vec::new();
        let mut w = region.clone();
        for _ in 0..3 {
            let q = quasi_inverse_probe(&b.h, &hyx, &w, 300, 37)?;
            disp.push(q.max_displacement_xx.max(q.max_displacement_yy));
            w = w.doubled();
        }
        let ratios: Vec<f64> = disp.windows(2).map(|p| p[1] / p[0]).collect();
        ok &= ratios.iter().all(|&q| q < QI_RATIO);
        details.push(format!(
            "{}: max d={worst:.3} <= R+M={bound:.3}, quasi-inverse {disp:.3?}",
            f.label()
        ));
    }
    check(ok, details.join("; "))
}

fn qi_bound() -> Result<Outcome> {
    let region = QueryRegion::new(8.0);
    let b = build(BoundaryMap::identity(), &region.grid(&LRP, 400), &region)?;
    let rep = qi_probe(&b.h, &region, 2000, 41)?;
    let w = rep.worst_pair;
    let ok = rep.lambda_hat <= LAMBDA_MAX && rep.recheck && w.d_y <= rep.lambda_hat * w.d_x + rep.eps_hat;
    check(
        ok,
        format!(
            "lambda={:.4} eps={:.4} over {} pairs",
            rep.lambda_hat, rep.eps_hat, rep.pairs
        ),
    )
}

fn boundary_agreement() -> Result<Outcome> {
    let heights = [4.0, 8.0, 16.0, 32.0];
    let region = QueryRegion::new(4.0);
    let mut ok = true;
    let mut details = Vec::new();
    for (f, p) in [
        (BoundaryMap::identity(), r(0, 0)),
        (BoundaryMap::translation(3, -2), r(2, 1)),
    ] {
        let rays: Vec<ModelPoint> = heights.iter().map(|&t| p.ray_point(t)).collect();
        let tables = TableSet::shared(&LRP)?;
        let pi = Arc::new(BarycenterMap::new(&LRP, 2.0, tables)?);
        let r = select_radius(&pi, &rays)?;
        let h = ExtendedMap::from_parts(f.clone(), pi.clone(), pi, r);
        let m = bounded_expansion(&h, &region, 3.0, 64, 43)?.m;
        let rows = boundary_agreement_probe(&h, p, &heights)?;
        let worst = rows.iter().map(|row| row.deviation).fold(0.0, f64::max);
        ok &= worst <= r + m;
        details.push(format!("{}: max deviation {worst:.4} <= R+M={:.2}", f.label(), r + m));
    }
    check(ok, details.join("; "))
}

type Criterion = (u32, &'static str, Duration, fn() -> Result<Outcome>);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "example reproduction", Duration::from_secs(1), example_reproduction),
        (2, "cross-ratio blow-up", Duration::from_secs(1), cross_ratio_blow_up),
        (3, "non-2-stability verdict", Duration::from_secs(10), non_two_stable),
        (
            4,
            "sampled vs exact contracting constants",
            Duration::from_secs(60),
            sampled_vs_exact,
        ),
        (5, "slim triangles", Duration::from_secs(60), slim_triangles),
        (6, "flip bound", Duration::from_secs(120), flip_bound),
        (
            7,
            "isometries are quasi-mobius with lambda = 1",
            Duration::from_secs(60),
            isometry_quasi_mobius,
        ),
        (
            8,
            "extension round trip",
            Duration::from_secs(600),
            extension_round_trip,
        ),
        (9, "quasi-isometry bound", Duration::from_secs(120), qi_bound),
        (10, "boundary agreement", Duration::from_secs(120), boundary_agreement),
    ];
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(o) => (o.pass && elapsed <= limit, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} {id:>2} {name}: {detail} [{:.2}s, limit {}s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
