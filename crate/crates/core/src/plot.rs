//! Self-contained SVG charts. Output is a pure function of the data: fixed
//! float formatting, no timestamps, no external assets.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::lower_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlotKind {
    Path,
    Ice,
    Pdp2,
    Bar,
    Waterfall,
    Hist,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlotData {
    /// Regularization path: loss and nonzero count against the L1 budget s.
    Path {
        s: Vec<f64>,
        loss: Vec<f64>,
        nonzero: Vec<usize>,
        chosen: Option<usize>,
        loss_label: String,
    },
    Ice {
        feature: String,
        grid: Vec<f64>,
        curves: Vec<Vec<f64>>,
        pdp: Vec<f64>,
        markers: Vec<(f64, f64)>,
    },
    Pdp2 {
        features: [String; 2],
        grid_a: Vec<f64>,
        grid_b: Vec<f64>,
        /// `surface[i][j]` at `(grid_a[i], grid_b[j])`.
        surface: Vec<Vec<f64>>,
        points: Vec<(f64, f64)>,
    },
    Bar {
        title: String,
        labels: Vec<String>,
        values: Vec<f64>,
    },
    Waterfall {
        base: f64,
        prediction: f64,
        contributions: Vec<(String, f64)>,
    },
    Hist {
        label: String,
        values: Vec<f64>,
        bins: usize,
        quantiles: Vec<f64>,
    },
}

impl PlotData {
    pub fn kind(&self) -> PlotKind {
        match self {
            PlotData::Path { .. } => PlotKind::Path,
            PlotData::Ice { .. } => PlotKind::Ice,
            PlotData::Pdp2 { .. } => PlotKind::Pdp2,
            PlotData::Bar { .. } => PlotKind::Bar,
            PlotData::Waterfall { .. } => PlotKind::Waterfall,
            PlotData::Hist { .. } => PlotKind::Hist,
        }
    }

    fn check(&self) -> Result<()> {
        let empty = |what: &str| Err(Error::EmptySeries(what.to_string()));
        match self {
            PlotData::Path { s, loss, nonzero, .. } => {
                if s.is_empty() {
                    return empty("path");
                }
                if loss.len() != s.len() || nonzero.len() != s.len() {
                    return Err(Error::InvalidArgument("path series lengths differ".into()));
                }
            }
            PlotData::Ice { grid, curves, pdp, .. } => {
                if grid.is_empty() {
                    return empty("ice");
                }
                if pdp.len() != grid.len() || curves.iter().any(|c| c.len() != grid.len()) {
                    return Err(Error::InvalidArgument("ice curves do not match the grid".into()));
                }
            }
            PlotData::Pdp2 { grid_a, grid_b, surface, .. } => {
                if grid_a.is_empty() || grid_b.is_empty() {
                    return empty("pdp2");
                }
                if surface.len() != grid_a.len() || surface.iter().any(|r| r.len() != grid_b.len()) {
                    return Err(Error::InvalidArgument("surface does not match the grids".into()));
                }
            }
            PlotData::Bar { labels, values, .. } => {
                if values.is_empty() {
                    return empty("bar");
                }
                if labels.len() != values.len() {
                    return Err(Error::InvalidArgument("bar labels and values differ in length".into()));
                }
            }
            PlotData::Waterfall { contributions, .. } => {
                if contributions.is_empty() {
                    return empty("waterfall");
                }
            }
            PlotData::Hist { values, bins, quantiles, .. } => {
                if values.is_empty() {
                    return empty("hist");
                }
                if *bins == 0 {
                    return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
                }
                if quantiles.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
                    return Err(Error::InvalidArgument("quantile markers must lie in (0, 1)".into()));
                }
            }
        }
        Ok(())
    }
}

/// Where the plotted data goes next to `svg`: `fig.svg` -> `fig.data.csv`.
pub fn data_path(svg: &Path) -> PathBuf {
    svg.with_extension("data.csv")
}

/// Write `out` and its data CSV. Nothing is written if the data is invalid.
pub fn emit_plot(data: &PlotData, out: &Path) -> Result<()> {
    let svg = render_svg(data)?;
    let csv = render_csv(data)?;
    let write = |p: &Path, s: &str| {
        fs::write(p, s).map_err(|source| Error::Write { path: p.to_path_buf(), source })
    };
    write(out, &svg)?;
    write(&data_path(out), &csv)
}

fn f(v: f64) -> String {
    format!("{v:.3}")
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const L: f64 = 70.0;
const R: f64 = 70.0;
const T: f64 = 40.0;
const B: f64 = 55.0;

#[derive(Clone, Copy)]
struct Scale {
    d0: f64,
    d1: f64,
    r0: f64,
    r1: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, r0: f64, r1: f64) -> Self {
        let (lo, hi) = if hi > lo {
            (lo, hi)
        } else {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.05 };
            (lo - pad, hi + pad)
        };
        Self { d0: lo, d1: hi, r0, r1 }
    }

    fn padded(lo: f64, hi: f64, r0: f64, r1: f64) -> Self {
        let pad = (hi - lo) * 0.04;
        Self::new(lo - pad, hi + pad, r0, r1)
    }

    fn at(&self, v: f64) -> f64 {
        self.r0 + (v - self.d0) / (self.d1 - self.d0) * (self.r1 - self.r0)
    }

    fn ticks(&self) -> Vec<f64> {
        let span = self.d1 - self.d0;
        let raw = span / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .into_iter()
            .map(|m| m * mag)
            .find(|s| span / s <= 6.0)
            .unwrap_or(10.0 * mag);
        let mut t = (self.d0 / step).ceil() * step;
        let mut out = Vec::new();
        while t <= self.d1 + step * 1e-9 {
            out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
            t += step;
        }
        out
    }
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn bounds<'a>(vals: impl IntoIterator<Item = &'a f64>) -> (f64, f64) {
    vals.into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

struct Svg(String);

impl Svg {
    fn new(title: &str) -> Self {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"11\">"
        );
        let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
            f(W / 2.0),
            esc(title)
        );
        Svg(s)
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, style: &str) {
        let _ = writeln!(
            self.0,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" {style}/>",
            f(x1),
            f(y1),
            f(x2),
            f(y2)
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], style: &str) {
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{},{}", f(*x), f(*y))).collect();
        let _ = writeln!(self.0, "<polyline fill=\"none\" points=\"{}\" {style}/>", p.join(" "));
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.0,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{fill}\"/>",
            f(x),
            f(y),
            f(w.max(0.0)),
            f(h.max(0.0))
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, style: &str) {
        let _ = writeln!(self.0, "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" {style}/>", f(x), f(y), f(r));
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.0,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\">{}</text>",
            f(x),
            f(y),
            esc(s)
        );
    }

    fn text_rot(&mut self, x: f64, y: f64, s: &str) {
        let _ = writeln!(
            self.0,
            "<text x=\"{0}\" y=\"{1}\" text-anchor=\"middle\" transform=\"rotate(-90 {0} {1})\">{2}</text>",
            f(x),
            f(y),
            esc(s)
        );
    }

    fn x_axis(&mut self, sx: Scale, label: &str) {
        let y = H - B;
        self.line(L, y, W - R, y, "stroke=\"black\"");
        for t in sx.ticks() {
            let x = sx.at(t);
            self.line(x, y, x, y + 4.0, "stroke=\"black\"");
            self.text(x, y + 16.0, "middle", &tick_label(t));
        }
        self.text((L + W - R) / 2.0, H - 14.0, "middle", label);
    }

    fn y_axis(&mut self, sy: Scale, label: &str, right: bool) {
        let x = if right { W - R } else { L };
        let (dx, anchor, lx) = if right { (4.0, "start", W - 18.0) } else { (-4.0, "end", 18.0) };
        self.line(x, T, x, H - B, "stroke=\"black\"");
        for t in sy.ticks() {
            let y = sy.at(t);
            self.line(x, y, x + dx, y, "stroke=\"black\"");
            self.text(x + 2.0 * dx, y + 4.0, anchor, &tick_label(t));
        }
        self.text_rot(lx, (T + H - B) / 2.0, label);
    }

    fn finish(mut self) -> String {
        self.0.push_str("</svg>\n");
        self.0
    }
}

/// Five-stop blue-to-yellow ramp, `t` in [0, 1].
fn ramp(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * 4.0;
    let i = (x.floor() as usize).min(3);
    let u = x - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let c = |p: f64, q: f64| (p + (q - p) * u).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(a.0, b.0), c(a.1, b.1), c(a.2, b.2))
}

pub fn render_svg(data: &PlotData) -> Result<String> {
    data.check()?;
    Ok(match data {
        PlotData::Path { s, loss, nonzero, chosen, loss_label } => {
            let mut g = Svg::new("Regularization path");
            let (s0, s1) = bounds(s);
            let sx = Scale::padded(s0, s1, L, W - R);
            let (l0, l1) = bounds(loss);
            let sy = Scale::padded(l0, l1, H - B, T);
            let nz: Vec<f64> = nonzero.iter().map(|&k| k as f64).collect();
            let (n0, n1) = bounds(&nz);
            let sn = Scale::padded(n0.min(0.0), n1, H - B, T);
            g.x_axis(sx, "s (L1 norm of coefficients)");
            g.y_axis(sy, loss_label, false);
            g.y_axis(sn, "nonzero coefficients", true);
            let pts: Vec<(f64, f64)> = s.iter().zip(loss).map(|(&a, &b)| (sx.at(a), sy.at(b))).collect();
            g.polyline(&pts, "stroke=\"#1f77b4\" stroke-width=\"1.5\"");
            let pts: Vec<(f64, f64)> = s.iter().zip(&nz).map(|(&a, &b)| (sx.at(a), sn.at(b))).collect();
            g.polyline(&pts, "stroke=\"#ff7f0e\" stroke-width=\"1.5\" stroke-dasharray=\"4 3\"");
            if let Some(c) = chosen.filter(|&c| c < s.len()) {
                let x = sx.at(s[c]);
                g.line(x, T, x, H - B, "stroke=\"#d62728\" stroke-dasharray=\"2 2\"");
                g.text(x + 4.0, T + 12.0, "start", &format!("s = {}", tick_label(s[c])));
            }
            g.finish()
        }
        PlotData::Ice { feature, grid, curves, pdp, markers } => {
            let mut g = Svg::new(&format!("ICE: {feature}"));
            let (x0, x1) = bounds(grid.iter().chain(markers.iter().map(|m| &m.0)));
            let sx = Scale::padded(x0, x1, L, W - R);
            let all = curves.iter().flatten().chain(pdp).chain(markers.iter().map(|m| &m.1));
            let (y0, y1) = bounds(all);
            let sy = Scale::padded(y0, y1, H - B, T);
            g.x_axis(sx, feature);
            g.y_axis(sy, "prediction", false);
            for c in curves {
                let pts: Vec<(f64, f64)> = grid.iter().zip(c).map(|(&a, &b)| (sx.at(a), sy.at(b))).collect();
                g.polyline(&pts, "stroke=\"#7f7f7f\" stroke-opacity=\"0.5\"");
            }
            let pts: Vec<(f64, f64)> = grid.iter().zip(pdp).map(|(&a, &b)| (sx.at(a), sy.at(b))).collect();
            g.polyline(&pts, "stroke=\"#ff7f0e\" stroke-width=\"3\"");
            for &(a, b) in markers {
                g.circle(sx.at(a), sy.at(b), 2.5, "fill=\"#1f77b4\"");
            }
            g.finish()
        }
        PlotData::Pdp2 { features, grid_a, grid_b, surface, points } => {
            let mut g = Svg::new(&format!("Partial dependence: {} x {}", features[0], features[1]));
            let sx = Scale::new(grid_a[0], grid_a[grid_a.len() - 1], L, W - R);
            let sy = Scale::new(grid_b[0], grid_b[grid_b.len() - 1], H - B, T);
            let (z0, z1) = bounds(surface.iter().flatten());
            let zt = |z: f64| if z1 > z0 { (z - z0) / (z1 - z0) } else { 0.5 };
            // cell edges halfway between grid points
            let edges = |grid: &[f64]| -> Vec<f64> {
                let n = grid.len();
                (0..=n)
                    .map(|k| match k {
                        0 => grid[0],
                        k if k == n => grid[n - 1],
                        k => 0.5 * (grid[k - 1] + grid[k]),
                    })
                    .collect()
            };
            let ea = edges(grid_a);
            let eb = edges(grid_b);
            for (i, row) in surface.iter().enumerate() {
                for (j, &z) in row.iter().enumerate() {
                    let (xa, xb) = (sx.at(ea[i]), sx.at(ea[i + 1]));
                    let (ya, yb) = (sy.at(eb[j + 1]), sy.at(eb[j]));
                    g.rect(xa, ya, xb - xa, yb - ya, &ramp(zt(z)));
                }
            }
            if z1 > z0 && grid_a.len() > 1 && grid_b.len() > 1 {
                for k in 1..8 {
                    let level = z0 + (z1 - z0) * k as f64 / 8.0;
                    for seg in contour_segments(grid_a, grid_b, surface, level) {
                        let ((a0, b0), (a1, b1)) = seg;
                        g.line(sx.at(a0), sy.at(b0), sx.at(a1), sy.at(b1), "stroke=\"black\" stroke-width=\"0.8\"");
                    }
                }
            }
            for &(a, b) in points {
                g.circle(sx.at(a), sy.at(b), 3.0, "fill=\"red\" stroke=\"white\" stroke-width=\"0.5\"");
            }
            g.x_axis(sx, &features[0]);
            g.y_axis(sy, &features[1], false);
            let _ = writeln!(
                g.0,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"start\">range {} .. {}</text>",
                f(W - R + 6.0),
                f(T + 10.0),
                tick_label(z0),
                tick_label(z1)
            );
            g.finish()
        }
        PlotData::Bar { title, labels, values } => {
            let mut g = Svg::new(title);
            let n = values.len();
            let (_, v1) = bounds(values);
            let left = 150.0;
            let sx = Scale::new(0.0, v1.max(0.0), left, W - R);
            let band = (H - T - B) / n as f64;
            for (k, (l, &v)) in labels.iter().zip(values).enumerate() {
                let y = T + band * k as f64;
                g.rect(left, y + band * 0.15, sx.at(v.max(0.0)) - left, band * 0.7, "#1f77b4");
                g.text(left - 6.0, y + band * 0.5 + 4.0, "end", l);
            }
            let y = H - B;
            g.line(left, y, W - R, y, "stroke=\"black\"");
            for t in sx.ticks() {
                g.text(sx.at(t), y + 16.0, "middle", &tick_label(t));
            }
            g.text((left + W - R) / 2.0, H - 14.0, "middle", "mean |SHAP value|");
            g.finish()
        }
        PlotData::Waterfall { base, prediction, contributions } => {
            let mut g = Svg::new("Prediction breakdown");
            let mut running = *base;
            let mut steps = Vec::with_capacity(contributions.len());
            for (name, phi) in contributions {
                steps.push((name.as_str(), running, running + phi));
                running += phi;
            }
            let (lo, hi) = bounds(steps.iter().flat_map(|s| [&s.1, &s.2]).chain([base, prediction]));
            let left = 150.0;
            let sx = Scale::padded(lo, hi, left, W - R);
            let band = (H - T - B) / (steps.len() + 1) as f64;
            for (k, (name, a, b)) in steps.iter().enumerate() {
                let y = T + band * k as f64;
                let (x0, x1) = (sx.at(a.min(*b)), sx.at(a.max(*b)));
                let fill = if b >= a { "#d62728" } else { "#1f77b4" };
                g.rect(x0, y + band * 0.15, (x1 - x0).max(1.0), band * 0.7, fill);
                g.text(left - 6.0, y + band * 0.5 + 4.0, "end", &format!("{name} ({:+.4})", b - a));
            }
            let yb = T + band * steps.len() as f64;
            g.text(left - 6.0, yb + band * 0.5 + 4.0, "end", &format!("f(x) = {prediction:.4}"));
            for (v, style) in [(*base, "stroke=\"#7f7f7f\" stroke-dasharray=\"3 3\""), (*prediction, "stroke=\"black\"")] {
                g.line(sx.at(v), T, sx.at(v), H - B, style);
            }
            g.x_axis(sx, &format!("E[f(X)] = {base:.4}"));
            g.finish()
        }
        PlotData::Hist { label, values, bins, quantiles } => {
            let mut g = Svg::new(&format!("Distribution of {label}"));
            let counts = histogram(values, *bins);
            let (lo, hi) = bounds(values);
            let sx = Scale::padded(lo, hi, L, W - R);
            let cmax = counts.iter().map(|c| c.2).max().unwrap_or(0) as f64;
            let sy = Scale::new(0.0, cmax.max(1.0), H - B, T);
            for &(a, b, c) in &counts {
                let (xa, xb) = (sx.at(a), sx.at(b));
                g.rect(xa, sy.at(c as f64), xb - xa - 1.0, sy.at(0.0) - sy.at(c as f64), "#9ecae1");
            }
            for &tau in quantiles {
                let q = lower_quantile(values, tau);
                let x = sx.at(q);
                g.line(x, T, x, H - B, "stroke=\"#d62728\" stroke-width=\"1.5\"");
                g.text(x + 3.0, T + 12.0, "start", &format!("{:.0}%: {}", tau * 100.0, tick_label(q)));
            }
            g.x_axis(sx, label);
            g.y_axis(sy, "count", false);
            g.finish()
        }
    })
}

/// Equal-width bins over [min, max] as `(left, right, count)`.
fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let (lo, hi) = bounds(values);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values.iter().filter(|v| v.is_finite()) {
        let k = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (lo + width * k as f64, lo + width * (k + 1) as f64, c))
        .collect()
}

type Seg = ((f64, f64), (f64, f64));

/// Marching squares over the grid; one segment per crossing cell side pair.
fn contour_segments(ga: &[f64], gb: &[f64], z: &[Vec<f64>], level: f64) -> Vec<Seg> {
    let mut out = Vec::new();
    let lerp = |p: (f64, f64, f64), q: (f64, f64, f64)| {
        let t = if q.2 != p.2 { (level - p.2) / (q.2 - p.2) } else { 0.5 };
        (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
    };
    for i in 0..ga.len() - 1 {
        for j in 0..gb.len() - 1 {
            // corners counter-clockwise from (i, j)
            let c = [
                (ga[i], gb[j], z[i][j]),
                (ga[i + 1], gb[j], z[i + 1][j]),
                (ga[i + 1], gb[j + 1], z[i + 1][j + 1]),
                (ga[i], gb[j + 1], z[i][j + 1]),
            ];
            let mut hits = Vec::with_capacity(4);
            for e in 0..4 {
                let (p, q) = (c[e], c[(e + 1) % 4]);
                if (p.2 >= level) != (q.2 >= level) {
                    hits.push(lerp(p, q));
                }
            }
            if hits.len() == 2 {
                out.push((hits[0], hits[1]));
            } else if hits.len() == 4 {
                out.push((hits[0], hits[1]));
                out.push((hits[2], hits[3]));
            }
        }
    }
    out
}

pub fn render_csv(data: &PlotData) -> Result<String> {
    data.check()?;
    let mut s = String::new();
    let num = |v: f64| format!("{v}");
    match data {
        PlotData::Path { s: ss, loss, nonzero, chosen, .. } => {
            s.push_str("s,loss,nonzero_count,chosen\n");
            for k in 0..ss.len() {
                let _ = writeln!(s, "{},{},{},{}", num(ss[k]), num(loss[k]), nonzero[k], u8::from(*chosen == Some(k)));
            }
        }
        PlotData::Ice { grid, curves, pdp, .. } => {
            s.push_str("series,grid,value\n");
            for (&x, &v) in grid.iter().zip(pdp) {
                let _ = writeln!(s, "pdp,{},{}", num(x), num(v));
            }
            for (i, c) in curves.iter().enumerate() {
                for (&x, &v) in grid.iter().zip(c) {
                    let _ = writeln!(s, "ice_{i},{},{}", num(x), num(v));
                }
            }
        }
        PlotData::Pdp2 { grid_a, grid_b, surface, .. } => {
            s.push_str("a,b,value\n");
            for (i, row) in surface.iter().enumerate() {
                for (j, &z) in row.iter().enumerate() {
                    let _ = writeln!(s, "{},{},{}", num(grid_a[i]), num(grid_b[j]), num(z));
                }
            }
        }
        PlotData::Bar { labels, values, .. } => {
            s.push_str("label,value\n");
            for (l, &v) in labels.iter().zip(values) {
                let _ = writeln!(s, "{},{}", l, num(v));
            }
        }
        PlotData::Waterfall { base, prediction, contributions } => {
            s.push_str("label,value\n");
            let _ = writeln!(s, "base,{}", num(*base));
            for (l, v) in contributions {
                let _ = writeln!(s, "{l},{}", num(*v));
            }
            let _ = writeln!(s, "prediction,{}", num(*prediction));
        }
        PlotData::Hist { values, bins, quantiles, .. } => {
            s.push_str("kind,left,right,value\n");
            for (a, b, c) in histogram(values, *bins) {
                let _ = writeln!(s, "bin,{},{},{c}", num(a), num(b));
            }
            for &tau in quantiles {
                let q = lower_quantile(values, tau);
                let _ = writeln!(s, "quantile,{},{},{}", num(tau), num(tau), num(q));
            }
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(values: Vec<f64>) -> PlotData {
        PlotData::Hist { label: "d_resEffe".into(), values, bins: 10, quantiles: vec![0.1, 0.5, 0.9] }
    }

    #[test]
    fn same_data_same_bytes() {
        let d = PlotData::Pdp2 {
            features: ["a".into(), "b".into()],
            grid_a: vec![0.0, 1.0, 2.0],
            grid_b: vec![0.0, 1.0],
            surface: vec![vec![0.0, 1.0], vec![1.0, 2.0], vec![2.0, 3.0]],
            points: vec![(0.5, 0.5)],
        };
        assert_eq!(render_svg(&d).unwrap(), render_svg(&d.clone()).unwrap());
        assert!(render_svg(&d).unwrap().contains("fill=\"red\""));
    }

    #[test]
    fn hist_marks_the_ninety_percent_quantile() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        let svg = render_svg(&hist(v.clone())).unwrap();
        assert!(svg.contains("90%: 9<"));
        let csv = render_csv(&hist(v)).unwrap();
        assert!(csv.contains("quantile,0.9,0.9,9\n"));
    }

    #[test]
    fn empty_series_errors_and_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("h.svg");
        assert!(matches!(emit_plot(&hist(vec![]), &out), Err(Error::EmptySeries(_))));
        assert!(!out.exists() && !data_path(&out).exists());
    }

    #[test]
    fn emit_writes_svg_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("bar.svg");
        let d = PlotData::Bar { title: "t".into(), labels: vec!["x<1".into()], values: vec![0.5] };
        emit_plot(&d, &out).unwrap();
        let svg = fs::read_to_string(&out).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("x&lt;1"));
        assert_eq!(fs::read_to_string(data_path(&out)).unwrap(), "label,value\nx<1,0.5\n");
    }

    #[test]
    fn unwritable_path_is_a_write_error() {
        let d = hist(vec![1.0]);
        let e = emit_plot(&d, Path::new("/nonexistent-dir/x.svg")).unwrap_err();
        assert!(matches!(e, Error::Write { .. }));
    }

    #[test]
    fn contour_of_a_plane_is_a_straight_cut() {
        let g = [0.0, 1.0];
        let z = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let segs = contour_segments(&g, &g, &z, 0.5);
        assert_eq!(segs.len(), 1);
        let ((a0, _), (a1, _)) = segs[0];
        assert!((a0 - 0.5).abs() < 1e-12 && (a1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn all_kinds_render() {
        let kinds = [
            PlotData::Path { s: vec![0.0, 1.0], loss: vec![2.0, 1.0], nonzero: vec![0, 3], chosen: Some(1), loss_label: "pinball".into() },
            PlotData::Ice { feature: "v".into(), grid: vec![0.0, 1.0], curves: vec![vec![1.0, 2.0]], pdp: vec![1.0, 2.0], markers: vec![(0.5, 1.5)] },
            PlotData::Waterfall { base: 1.0, prediction: 1.5, contributions: vec![("a".into(), 0.7), ("b".into(), -0.2)] },
            hist(vec![3.0; 4]),
        ];
        for k in &kinds {
            let svg = render_svg(k).unwrap();
            assert!(svg.ends_with("</svg>\n"), "{:?}", k.kind());
            assert!(!svg.contains("NaN") && !svg.contains("inf"));
        }
    }
}
