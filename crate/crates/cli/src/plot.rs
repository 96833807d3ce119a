//! SVG rendering of plane-chart geometry read from CSV.
//!
//! Plane points are drawn as dots, ray points as vertical ticks at their
//! lattice foot whose length grows with the height. Tree charts have no plane
//! picture and are skipped.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;

const SIZE: f64 = 640.0;
const MARGIN: f64 = 24.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Style {
    /// Arrows from `x` to `h(x)`; needs x_chart, x_coords, h_chart, h_coords.
    Arrows,
    /// A point cloud; needs x_chart, x_coords and colours by an optional `kind` column.
    Points,
}

impl Style {
    fn required(self) -> &'static [&'static str] {
        match self {
            Style::Arrows => &["x_chart", "x_coords", "h_chart", "h_coords"],
            Style::Points => &["x_chart", "x_coords"],
        }
    }
}

/// A drawable point: plane position plus tick height for ray points.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Mark {
    at: [f64; 2],
    tick: Option<f64>,
}

fn mark(chart: &str, coords: &str) -> Result<Option<Mark>> {
    let c: Vec<f64> = coords
        .split_whitespace()
        .map(|s| s.parse::<f64>().with_context(|| format!("bad coordinate `{s}`")))
        .collect::<Result<_>>()?;
    Ok(match (chart, c.as_slice()) {
        ("plane", &[x, y]) => Some(Mark { at: [x, y], tick: None }),
        ("ray", &[m, n, h]) => Some(Mark {
            at: [m, n],
            tick: Some(h),
        }),
        ("plane" | "ray", _) => bail!("chart `{chart}` with {} coordinates", c.len()),
        _ => None,
    })
}

struct Frame {
    lo: [f64; 2],
    scale: f64,
}

impl Frame {
    fn fit(marks: impl Iterator<Item = [f64; 2]>) -> Frame {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in marks {
            for i in 0..2 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        if !lo[0].is_finite() {
            return Frame {
                lo: [-1.0, -1.0],
                scale: (SIZE - 2.0 * MARGIN) / 2.0,
            };
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1.0);
        Frame {
            lo,
            scale: (SIZE - 2.0 * MARGIN) / span,
        }
    }

    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        (
            MARGIN + (p[0] - self.lo[0]) * self.scale,
            SIZE - MARGIN - (p[1] - self.lo[1]) * self.scale,
        )
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn draw_mark(out: &mut String, f: &Frame, m: Mark, colour: &str, r: f64) {
    let (x, y) = f.px(m.at);
    match m.tick {
        None => {
            let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{colour}"/>"#);
        }
        Some(h) => {
            let len = 4.0 + 2.0 * h.min(8.0);
            let _ = writeln!(
                out,
                r#"<line x1="{x:.2}" y1="{y:.2}" x2="{x:.2}" y2="{:.2}" stroke="{colour}" stroke-width="1.5"/>"#,
                y - len
            );
        }
    }
}

/// Renders `csv` in `style`. Fails on missing columns or malformed rows.
pub fn render(csv_text: &str, style: Style) -> Result<String> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let missing: Vec<&str> = style.required().iter().copied().filter(|c| col(c).is_none()).collect();
    if !missing.is_empty() {
        bail!("input is missing column(s): {}", missing.join(", "));
    }
    let (xc, xk) = (col("x_chart").unwrap(), col("x_coords").unwrap());
    let kind = col("kind");
    let mut rows: Vec<(Mark, Option<Mark>, String)> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let Some(x) = mark(&rec[xc], &rec[xk])? else { continue };
        let h = match style {
            Style::Arrows => {
                let (hc, hk) = (col("h_chart").unwrap(), col("h_coords").unwrap());
                mark(&rec[hc], &rec[hk])?
            }
            Style::Points => None,
        };
        let k = kind.map(|i| rec[i].to_string()).unwrap_or_default();
        rows.push((x, h, k));
    }
    let frame = Frame::fit(
        rows.iter()
            .flat_map(|(x, h, _)| std::iter::once(x.at).chain(h.map(|m| m.at))),
    );
    let mut kinds: Vec<&str> = rows.iter().map(|r| r.2.as_str()).collect();
    kinds.sort_unstable();
    kinds.dedup();
    let colour = |k: &str| PALETTE[kinds.iter().position(|&s| s == k).unwrap_or(0) % PALETTE.len()];

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(
        out,
        r##"<defs><marker id="head" markerWidth="6" markerHeight="6" refX="5" refY="3" orient="auto"><path d="M0,0 L6,3 L0,6 z" fill="#555"/></marker></defs>"##
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (x, h, k) in &rows {
        match h {
            Some(h) => {
                let (a, b) = frame.px(x.at);
                let (c, d) = frame.px(h.at);
                if (a - c).abs() + (b - d).abs() > 0.5 {
                    let _ = writeln!(
                        out,
                        r##"<line x1="{a:.2}" y1="{b:.2}" x2="{c:.2}" y2="{d:.2}" stroke="#555" stroke-width="0.8" marker-end="url(#head)"/>"##
                    );
                }
                draw_mark(&mut out, &frame, *x, PALETTE[0], 2.0);
                draw_mark(&mut out, &frame, *h, PALETTE[1], 1.5);
            }
            None => draw_mark(&mut out, &frame, *x, colour(k), 2.0),
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}
