//! `morselab`: contracting constants, boundary probes and the quasi-isometric
//! extension of boundary maps on model CAT(0) spaces.

mod input;
mod plot;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use morselab_core::boundary::{quasi_mobius_probe, two_stable_probe};
use morselab_core::contracting::{contracting_constant_exact, contracting_constant_sampled, SamplerConfig};
use morselab_core::extension::{
    boundary_agreement_probe, bounded_expansion, chart_coords, fit_upper_line, qi_probe, quasi_inverse_probe,
    select_radius, AgreementRow, BarycenterMap, ExtensionConstants, QiReport, QuasiInverseReport, QueryRegion,
};
use morselab_core::repro::repro_example;
use morselab_core::{
    geodesic, BoundaryPoint, ExtendedMap, LatticeBox, ModelPoint, ModelSpace, TableKind, TableSet, Verdict, Window,
    EPS_GEOM,
};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "morselab", version, about)]
struct Cli {
    #[command(flatten)]
    cfg: RunConfig,
    #[command(subcommand)]
    cmd: Command,
}

/// Options shared by every subcommand.
#[derive(Debug, Args)]
struct RunConfig {
    /// Source space: `lattice_ray_plane`, `euclidean_plane`, inline JSON or a JSON file.
    #[arg(long, global = true, default_value = "lattice_ray_plane")]
    space: String,
    /// Target space; defaults to the source space.
    #[arg(long = "space-y", global = true)]
    space_y: Option<String>,
    /// Boundary map: `identity`, `paper_swap`, inline JSON or a JSON file.
    #[arg(long, global = true, default_value = "identity")]
    map: String,
    /// Stratum level in the source space.
    #[arg(long = "D", global = true)]
    d: Option<f64>,
    /// Stratum level in the target space.
    #[arg(long = "Dprime", global = true)]
    d_prime: Option<f64>,
    /// Radius of the extension; selected automatically when absent.
    #[arg(long = "R", global = true)]
    r: Option<f64>,
    /// Half-width of the lattice window, tree depth, or query region.
    #[arg(long, global = true)]
    window: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Sample count; the meaning depends on the subcommand.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProbeKind {
    #[value(name = "two_stable", alias = "two-stable")]
    TwoStable,
    #[value(name = "quasi_mobius", alias = "quasi-mobius")]
    QuasiMobius,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate the non-2-stable swap map with exact constants.
    ReproExample {
        #[arg(long = "n-max", default_value_t = 10)]
        n_max: u32,
    },
    /// Contracting constant of a geodesic.
    Contracting {
        /// `{"from": .., "to": ..}` inline or as a file.
        #[arg(long)]
        geodesic: String,
        #[arg(long, value_enum, default_value = "exact")]
        mode: Mode,
    },
    /// Probe a boundary map for 2-stability or the quasi-mobius property.
    Probe {
        #[arg(value_enum)]
        kind: ProbeKind,
    },
    /// Extend a boundary map to the interior and report its constants.
    Extend,
    /// Sampled E_K set and barycenter of one triangle of rays.
    Cloud {
        /// `[[m, n], [m, n], [m, n]]`.
        #[arg(long)]
        triangle: String,
    },
    /// Render a CSV produced by `extend` or `cloud` as SVG.
    Plot {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "arrows")]
        style: plot::Style,
    },
    /// Build (or load) every constant table of the source space.
    Tables,
}

/// The hypothesis of a construction does not hold for the given input.
#[derive(Debug)]
struct HypothesisFailure(String);

impl std::fmt::Display for HypothesisFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for HypothesisFailure {}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<HypothesisFailure>().is_some() {
        return 3;
    }
    match e.downcast_ref::<morselab_core::Error>() {
        Some(c) if c.is_hypothesis_failure() => 3,
        Some(c) if c.is_invariant_violation() => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

impl RunConfig {
    fn space_x(&self) -> Result<ModelSpace> {
        input::space(&self.space)
    }

    fn space_y(&self) -> Result<ModelSpace> {
        input::space(self.space_y.as_deref().unwrap_or(&self.space))
    }

    fn format(&self, default: Format, allowed: &[Format]) -> Result<Format> {
        let f = self.format.unwrap_or(default);
        if !allowed.contains(&f) {
            bail!("format {f:?} is not available here; use one of {allowed:?}");
        }
        Ok(f)
    }

    fn d(&self) -> f64 {
        self.d.unwrap_or(2.0)
    }

    /// The boundary window of half-width (or depth) `--window`.
    fn boundary_window(&self, space: &ModelSpace, default: f64) -> Result<Window> {
        let w = self.window.unwrap_or(default);
        if w < 0.0 || w.fract() != 0.0 {
            bail!("--window must be a non-negative integer for boundary windows, got {w}");
        }
        Ok(match space {
            ModelSpace::MetricTree(_) => Window::TreeDepth(w as usize),
            _ => Window::Lattice(LatticeBox::centered(w as i64)),
        })
    }

    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write `{}`", p.display())),
            None => {
                let mut o = std::io::stdout().lock();
                o.write_all(text.as_bytes())?;
                Ok(o.flush()?)
            }
        }
    }
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn coords(p: ModelPoint) -> (&'static str, String) {
    let (chart, c) = chart_coords(p);
    (chart, c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "))
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?)?)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = &cli.cfg;
    match &cli.cmd {
        Command::ReproExample { n_max } => repro(cfg, *n_max),
        Command::Contracting { geodesic, mode } => contracting(cfg, geodesic, *mode),
        Command::Probe { kind } => probe(cfg, *kind),
        Command::Extend => extend(cfg),
        Command::Cloud { triangle } => cloud(cfg, triangle),
        Command::Plot { input, style } => {
            cfg.format(Format::Svg, &[Format::Svg])?;
            let text = std::fs::read_to_string(input).with_context(|| format!("cannot read `{}`", input.display()))?;
            cfg.emit(&plot::render(&text, *style)?)
        }
        Command::Tables => {
            cfg.format(Format::Json, &[Format::Json])?;
            let tables = TableSet::shared(&cfg.space_x()?)?;
            let all = TableKind::ALL
                .iter()
                .map(|&k| tables.get(k))
                .collect::<morselab_core::Result<Vec<_>>>()?;
            cfg.emit(&json(&all)?)
        }
    }
}

fn repro(cfg: &RunConfig, n_max: u32) -> Result<()> {
    let rows = repro_example(n_max)?;
    let text = match cfg.format(Format::Csv, &[Format::Csv, Format::Json])? {
        Format::Json => json(&rows)?,
        _ => csv_text(
            &["n", "D_alpha", "D_f_alpha", "cr_before", "cr_after"],
            rows.iter().map(|r| {
                vec![
                    r.n.to_string(),
                    r.d_alpha.to_string(),
                    r.d_f_alpha.to_string(),
                    r.cr_before.to_string(),
                    r.cr_after.to_string(),
                ]
            }),
        )?,
    };
    cfg.emit(&text)
}

fn contracting(cfg: &RunConfig, spec: &str, mode: Mode) -> Result<()> {
    cfg.format(Format::Json, &[Format::Json])?;
    let space = cfg.space_x()?;
    let g = input::geodesic(spec)?;
    let path = geodesic(&space, g.from, g.to)?;
    let cert = match mode {
        Mode::Exact => contracting_constant_exact(&space, &path)?,
        Mode::Sampled => {
            let d = SamplerConfig::default();
            let sc = SamplerConfig {
                window: cfg.window.unwrap_or(d.window),
                balls: cfg.samples.unwrap_or(d.balls),
                samples_per_ball: d.samples_per_ball,
                seed: cfg.seed,
            };
            contracting_constant_sampled(&space, &path, &sc)?
        }
    };
    cfg.emit(&json(&cert)?)
}

fn print_verdict(v: &Verdict) {
    eprintln!("verdict: {v}");
}

fn probe(cfg: &RunConfig, kind: ProbeKind) -> Result<()> {
    let (sx, sy) = (cfg.space_x()?, cfg.space_y()?);
    let f = input::map(&cfg.map)?;
    let window = cfg.boundary_window(&sx, if sx.tree().is_some() { 2.0 } else { 8.0 })?;
    let fmt = cfg.format(Format::Csv, &[Format::Csv, Format::Json])?;
    let text = match kind {
        ProbeKind::TwoStable => {
            let rep = two_stable_probe(&sx, &sy, &f, cfg.d(), &window, cfg.samples.unwrap_or(50_000), cfg.seed)?;
            eprintln!("D' estimate: {}", rep.d_prime_estimate);
            print_verdict(&rep.verdict);
            match fmt {
                Format::Json => json(&rep)?,
                _ => csv_text(
                    &["d_in", "d_out", "a", "b", "fa", "fb"],
                    rep.scatter.iter().map(|p| {
                        vec![
                            p.constant_in.to_string(),
                            p.constant_out.to_string(),
                            p.a.to_string(),
                            p.b.to_string(),
                            p.fa.to_string(),
                            p.fb.to_string(),
                        ]
                    }),
                )?,
            }
        }
        ProbeKind::QuasiMobius => {
            let rep = quasi_mobius_probe(&sx, &sy, &f, cfg.d(), &window, cfg.samples.unwrap_or(2000), cfg.seed)?;
            let off = rep.envelope.iter().map(|&(t, p)| (p - t).abs()).fold(0.0, f64::max);
            if off <= EPS_GEOM {
                eprintln!("envelope = identity");
            } else {
                let (lambda, eps) = fit_upper_line(&rep.envelope);
                eprintln!("envelope <= {lambda} t + {eps} (slack {})", rep.slack);
            }
            print_verdict(&rep.verdict);
            match fmt {
                Format::Json => json(&rep)?,
                _ => csv_text(
                    &["cr_in", "cr_out", "p0", "p1", "p2", "p3"],
                    rep.scatter.iter().map(|s| {
                        let mut row = vec![s.cr_in.to_string(), s.cr_out.to_string()];
                        row.extend(s.points.iter().map(|b| b.to_string()));
                        row
                    }),
                )?,
            }
        }
    };
    cfg.emit(&text)
}

#[derive(Debug, Serialize)]
struct AgreementReport {
    point: BoundaryPoint,
    #[serde(rename = "R")]
    r: f64,
    rows: Vec<AgreementRow>,
}

#[derive(Debug, Serialize)]
struct ExtendReport {
    map: String,
    #[serde(rename = "D")]
    d: f64,
    #[serde(rename = "D_prime")]
    d_prime: f64,
    constants: ExtensionConstants,
    qi: QiReport,
    quasi_inverse: QuasiInverseReport,
    boundary_agreement: AgreementReport,
}

#[derive(Debug, Serialize)]
struct ExtendOutput<'a> {
    report: &'a ExtendReport,
    evaluations: &'a [morselab_core::extension::Evaluation],
}

/// Length scale for the bounded-expansion estimate.
const EXPANSION_L: f64 = 3.0;
const AGREEMENT_HEIGHTS: [f64; 4] = [4.0, 8.0, 16.0, 32.0];

fn extend(cfg: &RunConfig) -> Result<()> {
    let fmt = cfg.format(Format::Csv, &[Format::Csv, Format::Json])?;
    let (sx, sy) = (cfg.space_x()?, cfg.space_y()?);
    let f = input::map(&cfg.map)?;
    let (d, d_prime) = (cfg.d(), cfg.d_prime.unwrap_or(cfg.d()));

    // The construction needs a 2-stable map; refuse with the witness otherwise.
    let pw = match sx {
        ModelSpace::MetricTree(_) => Window::TreeDepth(2),
        _ => Window::Lattice(LatticeBox::centered(8)),
    };
    let stable = two_stable_probe(&sx, &sy, &f, d, &pw, 20_000, cfg.seed)?;
    match &stable.verdict {
        Verdict::Violation { .. } => {
            print_verdict(&stable.verdict);
            return Err(HypothesisFailure(format!("{} is not 2-stable at D = {d}", f.label())).into());
        }
        Verdict::Inconclusive { .. } => eprintln!("warning: 2-stability probe {}", stable.verdict),
        Verdict::CertifiedBounded { .. } => {}
    }

    let region = QueryRegion::new(cfg.window.unwrap_or(4.0));
    let queries = region.grid(&sx, cfg.samples.unwrap_or(400));
    let pix = Arc::new(BarycenterMap::new(&sx, d, TableSet::shared(&sx)?)?);
    let piy = Arc::new(BarycenterMap::new(&sy, d_prime, TableSet::shared(&sy)?)?);
    let r = match cfg.r {
        Some(r) => r,
        None => select_radius(&pix, &queries)?,
    };
    let h = ExtendedMap::from_parts(f.clone(), pix.clone(), piy.clone(), r);
    let constants = bounded_expansion(&h, &region, EXPANSION_L, 200, cfg.seed)?;
    let evals = h.evaluate_all(&queries)?;
    let qi = qi_probe(&h, &region, 2000, cfg.seed)?;
    let h_yx = ExtendedMap::from_parts(f.inverse_map(), piy, pix.clone(), r.max(constants.m));
    let quasi_inverse = quasi_inverse_probe(&h, &h_yx, &region, 300, cfg.seed)?;

    let mut ends = sx.enumerate_boundary(&pw)?;
    ends.sort();
    let p = match &sx {
        ModelSpace::LatticeRayPlane => BoundaryPoint::lattice(0, 0),
        _ => ends[0],
    };
    let rays: Vec<ModelPoint> = AGREEMENT_HEIGHTS.iter().map(|&t| p.ray_point(t)).collect();
    let ra = select_radius(&pix, &rays)?.max(r);
    let rows = boundary_agreement_probe(&h.with_radius(ra), p, &AGREEMENT_HEIGHTS)?;

    let report = ExtendReport {
        map: f.label().to_string(),
        d,
        d_prime,
        constants,
        qi,
        quasi_inverse,
        boundary_agreement: AgreementReport { point: p, r: ra, rows },
    };
    let text = match fmt {
        Format::Json => json(&ExtendOutput {
            report: &report,
            evaluations: &evals,
        })?,
        _ => {
            eprint!("{}", json(&report)?);
            csv_text(
                &[
                    "x_chart",
                    "x_coords",
                    "h_chart",
                    "h_coords",
                    "pi_diameter",
                    "triangle_count",
                ],
                evals.iter().map(|e| {
                    let (xc, xk) = coords(e.x);
                    let (hc, hk) = coords(e.h);
                    vec![
                        xc.into(),
                        xk,
                        hc.into(),
                        hk,
                        e.pi_diameter.to_string(),
                        e.triangle_count.to_string(),
                    ]
                }),
            )?
        }
    };
    cfg.emit(&text)
}

fn cloud(cfg: &RunConfig, triangle: &str) -> Result<()> {
    let fmt = cfg.format(Format::Csv, &[Format::Csv, Format::Json])?;
    let space = cfg.space_x()?;
    let t = input::lattice_triangle(triangle)?.map(|[m, n]| BoundaryPoint::lattice(m, n));
    let pi = BarycenterMap::new(&space, cfg.d(), TableSet::shared(&space)?)?;
    if let Some((a, b, c)) = pi.violation(&t)? {
        return Err(HypothesisFailure(format!(
            "side ({a}, {b}) has contracting constant {c} > D = {}",
            cfg.d()
        ))
        .into());
    }
    let ek = pi.ek(&t)?;
    let text = match fmt {
        Format::Json => json(&ek)?,
        _ => {
            let mut rows: Vec<Vec<String>> = Vec::new();
            let mut push = |p: ModelPoint, kind: &str| {
                let (c, k) = coords(p);
                rows.push(vec![c.into(), k, kind.into()]);
            };
            for b in t {
                push(b.ray_point(1.0), "vertex");
            }
            for &s in &ek.samples {
                push(s, "sample");
            }
            push(ek.barycenter, "barycenter");
            eprintln!("K = {}, {} samples", ek.k, ek.samples.len());
            csv_text(&["x_chart", "x_coords", "kind"], rows)?
        }
    };
    cfg.emit(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let core = |e: morselab_core::Error| exit_code(&anyhow::Error::from(e));
        assert_eq!(core(morselab_core::Error::EmptyStratum), 3);
        assert_eq!(core(morselab_core::Error::EmptyPreimage { radius: 1.0 }), 3);
        assert_eq!(core(morselab_core::Error::NonUniqueProjection(0.5)), 4);
        assert_eq!(core(morselab_core::Error::SameEndpoints), 2);
        assert_eq!(exit_code(&HypothesisFailure("x".into()).into()), 3);
        assert_eq!(exit_code(&anyhow::anyhow!("usage")), 2);
        let wrapped = anyhow::Error::from(morselab_core::Error::EmptyEkSet {
            triangle: "t".into(),
            k: 1.0,
        })
        .context("while extending");
        assert_eq!(exit_code(&wrapped), 4);
    }
}
