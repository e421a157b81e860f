//! Deterministic SVG figures for fits and CV reports.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Band;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    ScatterPredVsActual,
    ErrorScatter,
    CoeffBoxplot,
    SpectrumFit,
    Scores,
    BandSummary,
}

impl PlotKind {
    pub const ALL: [PlotKind; 6] = [
        PlotKind::ScatterPredVsActual,
        PlotKind::ErrorScatter,
        PlotKind::CoeffBoxplot,
        PlotKind::SpectrumFit,
        PlotKind::Scores,
        PlotKind::BandSummary,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PlotKind::ScatterPredVsActual => "scatter_pred_vs_actual",
            PlotKind::ErrorScatter => "error_scatter",
            PlotKind::CoeffBoxplot => "coeff_boxplot",
            PlotKind::SpectrumFit => "spectrum_fit",
            PlotKind::Scores => "scores",
            PlotKind::BandSummary => "band_summary",
        }
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown plot kind '{s}'")))
    }
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 64.0;

const INK: &str = "#222222";
const ACCENT: &str = "#1f5fa8";
const DARK_RED: &str = "#8b1a1a";
const LIGHT_RED: &str = "#e8848a";
const GRID: &str = "#dddddd";

fn num(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return "0".into();
    }
    let a = v.abs();
    let s = if !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        let decimals = (3 - a.log10().floor() as i32).clamp(0, 6) as usize;
        format!("{v:.decimals$}")
    };
    if s.contains('.') && !s.contains('e') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn px(v: f64) -> String {
    format!("{v:.2}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Roughly five round tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![lo];
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn extent(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let mut r: Option<(f64, f64)> = None;
    for v in values.filter(|v| v.is_finite()) {
        r = Some(match r {
            None => (v, v),
            Some((a, b)) => (a.min(v), b.max(v)),
        });
    }
    r.map(|(a, b)| {
        if b > a {
            let pad = 0.05 * (b - a);
            (a - pad, b + pad)
        } else {
            let pad = if a == 0.0 { 1.0 } else { 0.1 * a.abs() };
            (a - pad, b + pad)
        }
    })
}

struct Canvas {
    out: String,
    x: (f64, f64),
    y: (f64, f64),
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut out = String::new();
        let _ = write!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" \
             font-family=\"Helvetica, Arial, sans-serif\" font-size=\"12\">\n\
             <rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"#ffffff\"/>\n\
             <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\" fill=\"{INK}\">{}</text>\n",
            px(W / 2.0),
            escape(title)
        );
        Canvas {
            out,
            x: (0.0, 1.0),
            y: (0.0, 1.0),
        }
    }

    fn sx(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn sy(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    /// Frame, grid lines, ticks and axis labels.
    fn axes(&mut self, x: (f64, f64), y: (f64, f64), xlabel: &str, ylabel: &str, xticks: bool) {
        self.x = x;
        self.y = y;
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        if xticks {
            for t in ticks(x.0, x.1) {
                let p = self.sx(t);
                let _ = writeln!(
                    self.out,
                    "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"{GRID}\"/>\n\
                     <text x=\"{0}\" y=\"{3}\" text-anchor=\"middle\" fill=\"{INK}\">{4}</text>",
                    px(p),
                    px(y0),
                    px(y1),
                    px(y1 + 16.0),
                    num(t)
                );
            }
        }
        for t in ticks(y.0, y.1) {
            let p = self.sy(t);
            let _ = writeln!(
                self.out,
                "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{GRID}\"/>\n\
                 <text x=\"{3}\" y=\"{4}\" text-anchor=\"end\" fill=\"{INK}\">{5}</text>",
                px(x0),
                px(p),
                px(x1),
                px(x0 - 6.0),
                px(p + 4.0),
                num(t)
            );
        }
        let _ = writeln!(
            self.out,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"{INK}\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{INK}\">{}</text>\n\
             <text x=\"18\" y=\"{}\" text-anchor=\"middle\" fill=\"{INK}\" transform=\"rotate(-90 18 {})\">{}</text>",
            px(x0),
            px(y0),
            px(x1 - x0),
            px(y1 - y0),
            px((x0 + x1) / 2.0),
            px(H - 18.0),
            escape(xlabel),
            px((y0 + y1) / 2.0),
            px((y0 + y1) / 2.0),
            escape(ylabel)
        );
    }

    fn caption(&mut self, text: &str) {
        let _ = writeln!(
            self.out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"#666666\" font-style=\"italic\">{}</text>",
            px((LEFT + W - RIGHT) / 2.0),
            px((TOP + H - BOTTOM) / 2.0),
            escape(text)
        );
    }

    fn dot(&mut self, x: f64, y: f64, color: &str) {
        let _ = writeln!(
            self.out,
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\" fill-opacity=\"0.7\"/>",
            px(self.sx(x)),
            px(self.sy(y))
        );
    }

    fn segment(&mut self, a: (f64, f64), b: (f64, f64), color: &str, width: f64, dash: bool) {
        let _ = writeln!(
            self.out,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"{}\"{}/>",
            px(self.sx(a.0)),
            px(self.sy(a.1)),
            px(self.sx(b.0)),
            px(self.sy(b.1)),
            num(width),
            if dash { " stroke-dasharray=\"5 4\"" } else { "" }
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str) {
        let coords: Vec<String> = pts
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{},{}", px(self.sx(x)), px(self.sy(y))))
            .collect();
        let _ = writeln!(
            self.out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            coords.join(" ")
        );
    }

    fn legend(&mut self, entries: &[(&str, &str)]) {
        for (n, (label, color)) in entries.iter().enumerate() {
            let y = TOP + 14.0 + 16.0 * n as f64;
            let x = W - RIGHT - 150.0;
            let _ = writeln!(
                self.out,
                "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n\
                 <text x=\"{}\" y=\"{}\" fill=\"{INK}\">{}</text>",
                px(x),
                px(y - 9.0),
                px(x + 15.0),
                px(y),
                escape(label)
            );
        }
    }

    fn finish(mut self) -> String {
        self.out += "</svg>\n";
        self.out
    }
}

/// Predicted against observed responses with the identity line.
pub fn scatter_pred_vs_actual(points: &[(f64, f64)], response_label: &str) -> String {
    let mut c = Canvas::new("Predicted versus observed response");
    let pts: Vec<_> = points.iter().filter(|(a, b)| a.is_finite() && b.is_finite()).copied().collect();
    let Some(r) = extent(pts.iter().flat_map(|(a, b)| [*a, *b])) else {
        c.axes((0.0, 1.0), (0.0, 1.0), &format!("observed {response_label}"), &format!("predicted {response_label}"), true);
        c.caption("no predictions");
        return c.finish();
    };
    c.axes(r, r, &format!("observed {response_label}"), &format!("predicted {response_label}"), true);
    c.segment((r.0, r.0), (r.1, r.1), "#999999", 1.0, true);
    for (a, p) in pts {
        c.dot(a, p, ACCENT);
    }
    c.finish()
}

/// Per-batch model error against the mean-predictor error; points below the
/// diagonal are batches where the model wins.
pub fn error_scatter(points: &[(f64, f64)], metric_label: &str) -> String {
    let mut c = Canvas::new("Model error versus prediction by the mean");
    let xl = format!("mean predictor, {metric_label}");
    let yl = format!("model, {metric_label}");
    let pts: Vec<_> = points.iter().filter(|(a, b)| a.is_finite() && b.is_finite()).copied().collect();
    let r = extent(pts.iter().flat_map(|(a, b)| [*a, *b]).chain([0.0])).filter(|_| !pts.is_empty());
    let Some(r) = r else {
        c.axes((0.0, 1.0), (0.0, 1.0), &xl, &yl, true);
        c.caption("no batches");
        return c.finish();
    };
    c.axes(r, r, &xl, &yl, true);
    c.segment((r.0, r.0), (r.1, r.1), "#999999", 1.0, true);
    for (m, e) in pts {
        c.dot(m, e, ACCENT);
    }
    c.finish()
}

/// One box per position (quartiles, median, 1.5·IQR whiskers).
pub fn coeff_boxplot(groups: &[Vec<f64>], axis_label: &str, value_label: &str) -> String {
    let mut c = Canvas::new(&format!("Estimated {value_label} across batches"));
    let all = groups.iter().flatten().copied();
    let Some(y) = extent(all) else {
        c.axes((0.0, 1.0), (0.0, 1.0), axis_label, value_label, false);
        c.caption("no coefficients");
        return c.finish();
    };
    let x = (0.5, groups.len() as f64 + 0.5);
    c.axes(x, y, axis_label, value_label, false);
    for (g, vals) in groups.iter().enumerate() {
        let pos = g as f64 + 1.0;
        let _ = writeln!(
            c.out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{INK}\">{}</text>",
            px(c.sx(pos)),
            px(H - BOTTOM + 16.0),
            g + 1
        );
        let mut v: Vec<f64> = vals.iter().copied().filter(|v| v.is_finite()).collect();
        if v.is_empty() {
            continue;
        }
        v.sort_by(f64::total_cmp);
        let q = |p: f64| crate::eval::quantile(&v, p).unwrap();
        let (q1, med, q3) = (q(0.25), q(0.5), q(0.75));
        let iqr = q3 - q1;
        let lo = v.iter().copied().find(|x| *x >= q1 - 1.5 * iqr).unwrap_or(q1);
        let hi = v.iter().rev().copied().find(|x| *x <= q3 + 1.5 * iqr).unwrap_or(q3);
        let half = 0.3;
        let _ = writeln!(
            c.out,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#cfe0f3\" stroke=\"{ACCENT}\"/>",
            px(c.sx(pos - half)),
            px(c.sy(q3)),
            px(c.sx(pos + half) - c.sx(pos - half)),
            px((c.sy(q1) - c.sy(q3)).max(0.5))
        );
        c.segment((pos - half, med), (pos + half, med), INK, 2.0, false);
        c.segment((pos, q3), (pos, hi), ACCENT, 1.0, false);
        c.segment((pos, q1), (pos, lo), ACCENT, 1.0, false);
        for o in v.iter().filter(|x| **x < lo || **x > hi) {
            c.dot(pos, *o, DARK_RED);
        }
    }
    c.finish()
}

/// Observed spectrum, fitted curve, and coefficients as vertical stems.
pub fn spectrum_fit(grid: &[f64], observed: Option<&[f64]>, fitted: &[f64], coeffs: &[f64]) -> String {
    let mut c = Canvas::new("Spectrum and its sparse kernel representation");
    let xl = "wavenumber (cm⁻¹)";
    let yl = "intensity (a.u.)";
    let ys = observed
        .into_iter()
        .flatten()
        .chain(fitted)
        .chain(coeffs)
        .copied()
        .chain([0.0]);
    let (Some(x), Some(y)) = (extent(grid.iter().copied()), extent(ys)) else {
        c.axes((0.0, 1.0), (0.0, 1.0), xl, yl, true);
        c.caption("no coefficients");
        return c.finish();
    };
    c.axes(x, y, xl, yl, true);
    if let Some(obs) = observed {
        let pts: Vec<_> = grid.iter().copied().zip(obs.iter().copied()).collect();
        c.polyline(&pts, "#999999");
    }
    let pts: Vec<_> = grid.iter().copied().zip(fitted.iter().copied()).collect();
    if !pts.is_empty() {
        c.polyline(&pts, ACCENT);
    }
    for (t, v) in grid.iter().zip(coeffs) {
        if *v != 0.0 && v.is_finite() {
            c.segment((*t, 0.0), (*t, *v), DARK_RED, 1.5, false);
        }
    }
    let mut legend = vec![("fitted", ACCENT), ("coefficients", DARK_RED)];
    if observed.is_some() {
        legend.insert(0, ("observed", "#999999"));
    }
    c.legend(&legend);
    if coeffs.iter().all(|v| *v == 0.0) {
        c.caption("no nonzero coefficients");
    }
    c.finish()
}

/// Score per wavenumber, kept wavenumbers highlighted.
pub fn scores(grid: &[f64], scores: &[f64], kept: &[usize]) -> String {
    let mut c = Canvas::new(&format!("Wavenumber scores ({} kept)", kept.len()));
    let (Some(x), Some(y)) = (extent(grid.iter().copied()), extent(scores.iter().copied().chain([0.0]))) else {
        c.axes((0.0, 1.0), (0.0, 1.0), "wavenumber (cm⁻¹)", "score", true);
        c.caption("no scores");
        return c.finish();
    };
    c.axes(x, y, "wavenumber (cm⁻¹)", "score", true);
    for (l, (t, s)) in grid.iter().zip(scores).enumerate() {
        let color = if kept.binary_search(&l).is_ok() { DARK_RED } else { "#aaaaaa" };
        c.segment((*t, 0.0), (*t, *s), color, 1.5, false);
    }
    c.legend(&[("kept", DARK_RED), ("discarded", "#aaaaaa")]);
    c.finish()
}

/// Covariate against response with per-band mean and median levels.
pub fn band_summary(points: &[(f64, f64)], bands: &[Band], response_label: &str, covariate_label: &str) -> String {
    let mut c = Canvas::new("Band summary");
    let xs = points.iter().map(|p| p.0).chain(bands.iter().flat_map(|b| [b.lo, b.hi]));
    let ys = points
        .iter()
        .map(|p| p.1)
        .chain(bands.iter().flat_map(|b| b.mean.into_iter().chain(b.median)));
    let (Some(x), Some(y)) = (extent(xs), extent(ys)) else {
        c.axes((0.0, 1.0), (0.0, 1.0), response_label, covariate_label, true);
        c.caption("no samples");
        return c.finish();
    };
    c.axes(x, y, response_label, covariate_label, true);
    for (r, v) in points {
        c.dot(*r, *v, "#777777");
    }
    for b in bands {
        if let Some(m) = b.mean {
            c.segment((b.lo, m), (b.hi, m), DARK_RED, 2.5, false);
        }
        if let Some(m) = b.median {
            c.segment((b.lo, m), (b.hi, m), LIGHT_RED, 2.5, true);
        }
    }
    c.legend(&[("band mean", DARK_RED), ("band median", LIGHT_RED)]);
    c.finish()
}
