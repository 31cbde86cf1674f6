//! Line charts with mean ± 1 sd bands, written as plain SVG text.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::table::{mean_sd, ResultTable};
use crate::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub title: String,
    pub x: String,
    pub ys: Vec<String>,
    /// Column splitting each y into several series.
    pub group: Option<String>,
    pub log_x: bool,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];
const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One summarized series: `(x, mean, sd)` sorted by `x`.
pub type Series = (String, Vec<(f64, f64, f64)>);

pub fn summarize(table: &ResultTable, spec: &PlotSpec) -> Result<Vec<Series>> {
    let col = |name: &str| {
        table
            .col(name)
            .ok_or_else(|| HarnessError::Config(format!("plot column {name} missing")))
    };
    let xj = col(&spec.x)?;
    let gj = spec.group.as_deref().map(col).transpose()?;
    let mut out = Vec::new();
    for y in &spec.ys {
        let yj = col(y)?;
        let mut groups: BTreeMap<String, BTreeMap<u64, (f64, Vec<f64>)>> = BTreeMap::new();
        for r in &table.rows {
            let (Some(x), Some(v)) = (r[xj].as_f64(), r[yj].as_f64()) else { continue };
            if !(x.is_finite() && v.is_finite()) {
                continue;
            }
            let g = gj.map(|j| r[j].render()).unwrap_or_default();
            // order keys by the float value via its order-preserving bits
            let key = if x >= 0.0 { x.to_bits() ^ (1 << 63) } else { !x.to_bits() };
            groups.entry(g).or_default().entry(key).or_insert((x, Vec::new())).1.push(v);
        }
        for (g, pts) in groups {
            let label = if g.is_empty() { y.clone() } else { format!("{y} [{}={g}]", spec.group.as_ref().unwrap()) };
            let pts = pts
                .into_values()
                .map(|(x, vs)| {
                    let (m, sd) = mean_sd(&vs);
                    (x, m, if sd.is_finite() { sd } else { 0.0 })
                })
                .collect();
            out.push((label, pts));
        }
    }
    Ok(out)
}

pub fn render(table: &ResultTable, spec: &PlotSpec) -> Result<String> {
    let series = summarize(table, spec)?;
    if series.iter().all(|s| s.1.is_empty()) {
        return Err(HarnessError::EmptyTable);
    }
    let tx = |x: f64| if spec.log_x { x.max(f64::MIN_POSITIVE).log10() } else { x };
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (_, pts) in &series {
        for &(x, m, sd) in pts {
            x0 = x0.min(tx(x));
            x1 = x1.max(tx(x));
            y0 = y0.min(m - sd);
            y1 = y1.max(m + sd);
        }
    }
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 <= y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let px = |x: f64| LEFT + (tx(x) - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| TOP + (y1 - y) / (y1 - y0) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, (W - RIGHT + LEFT) / 2.0, escape(&spec.title));
    let (bx, by) = (H - BOTTOM, W - RIGHT);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{bx}" x2="{by}" y2="{bx}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{bx}" stroke="black"/>"#);
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let yv = y0 + f * (y1 - y0);
        let xv = x0 + f * (x1 - x0);
        let xl = if spec.log_x { 10f64.powf(xv) } else { xv };
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#, LEFT - 6.0, py(yv) + 4.0, yv);
        let xpix = LEFT + f * (W - LEFT - RIGHT);
        let _ = writeln!(s, r#"<text x="{xpix}" y="{}" text-anchor="middle">{:.3}</text>"#, bx + 18.0, xl);
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (W - RIGHT + LEFT) / 2.0,
        H - 10.0,
        escape(&format!("{}{}", spec.x, if spec.log_x { " (log)" } else { "" }))
    );
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if pts.is_empty() {
            continue;
        }
        let upper: Vec<String> = pts.iter().map(|&(x, m, sd)| format!("{:.2},{:.2}", px(x), py(m + sd))).collect();
        let lower: Vec<String> = pts.iter().rev().map(|&(x, m, sd)| format!("{:.2},{:.2}", px(x), py(m - sd))).collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = pts.iter().map(|&(x, m, _)| format!("{:.2},{:.2}", px(x), py(m))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let ly = TOP + 16.0 * i as f64;
        let _ = writeln!(s, r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>"#, W - RIGHT + 10.0, ly);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, W - RIGHT + 24.0, ly + 9.0, escape(label));
    }
    s.push_str("</svg>\n");
    Ok(s)
}
