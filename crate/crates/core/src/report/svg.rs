//! Minimal standalone SVG charts with deterministic output.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::date::Day;
use crate::error::{Error, Result};

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 44.0;
const MARGIN_BOTTOM: f64 = 56.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Series {
    pub fn new(name: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { name: name.into(), x, y }
    }

    /// `y` against its index.
    pub fn indexed(name: impl Into<String>, y: Vec<f64>) -> Self {
        let x = (0..y.len()).map(|i| i as f64).collect();
        Self::new(name, x, y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum TickFormat {
    #[default]
    Number,
    /// Values are day numbers rendered as ISO dates.
    Date,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PlotData {
    Line(Vec<Series>),
    Scatter(Vec<Series>),
    Histogram {
        values: Vec<f64>,
        bins: usize,
    },
    /// Pre-computed density curves, drawn as filled outlines.
    Density(Vec<Series>),
    /// `z[i][j]` is the cell at `x[j]`, `y[i]`.
    Heatmap {
        x: Vec<f64>,
        y: Vec<f64>,
        z: Vec<Vec<f64>>,
    },
    /// One box per group: quartiles, median, whiskers at the 5% and 95% order statistics.
    Boxes(Vec<(String, Vec<f64>)>),
    Bars(Vec<(String, f64)>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub data: PlotData,
    pub x_ticks: TickFormat,
    pub width: u32,
    pub height: u32,
}

impl PlotSpec {
    pub fn new(
        title: impl Into<String>,
        x_label: impl Into<String>,
        y_label: impl Into<String>,
        data: PlotData,
    ) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            data,
            x_ticks: TickFormat::Number,
            width: 720,
            height: 420,
        }
    }

    pub fn with_date_axis(mut self) -> Self {
        self.x_ticks = TickFormat::Date;
        self
    }
}

/// Gaussian kernel density on `points` grid values, Silverman bandwidth.
pub fn kernel_density(values: &[f64], points: usize) -> Result<Series> {
    if values.len() < 2 || points < 2 {
        return Err(Error::EmptyPlot("density".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let (lo, hi) = min_max(values.iter().copied());
    let h = if sd > 0.0 { 1.06 * sd * n.powf(-0.2) } else { 1.0 };
    let (a, b) = (lo - 3.0 * h, hi + 3.0 * h);
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    let x: Vec<f64> = (0..points).map(|i| a + (b - a) * i as f64 / (points - 1) as f64).collect();
    let y =
        x.iter().map(|&g| norm * values.iter().map(|v| (-0.5 * ((g - v) / h).powi(2)).exp()).sum::<f64>()).collect();
    Ok(Series::new("density", x, y))
}

fn min_max(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        let d = if lo == 0.0 { 1.0 } else { lo.abs() * 0.05 };
        (lo - d, hi + d)
    }
}

/// Roughly five round-number ticks covering `[lo, hi]`.
fn nice_ticks(lo: f64, hi: f64) -> (Vec<f64>, usize) {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil();
    let mut ticks = Vec::new();
    let mut k = first;
    while k * step <= hi + step * 1e-9 {
        ticks.push(k * step);
        k += 1.0;
    }
    let decimals = (0..10)
        .find(|&d| {
            let scaled = step * 10f64.powi(d);
            (scaled - scaled.round()).abs() < 1e-6 * scaled.max(1.0)
        })
        .unwrap_or(10) as usize;
    (ticks, decimals)
}

fn fmt_tick(v: f64, decimals: usize, format: TickFormat) -> String {
    match format {
        TickFormat::Date => Day(v.round() as i32).to_string(),
        TickFormat::Number => {
            let s = format!("{v:.decimals$}");
            if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
                s[1..].to_string()
            } else {
                s
            }
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
}

impl Frame {
    fn new(spec: &PlotSpec, (x0, x1): (f64, f64), (y0, y1): (f64, f64)) -> Self {
        let (x0, x1) = padded(x0, x1);
        let (y0, y1) = padded(y0, y1);
        Self {
            x0,
            x1,
            y0,
            y1,
            left: MARGIN_LEFT,
            right: f64::from(spec.width) - MARGIN_RIGHT,
            top: MARGIN_TOP,
            bottom: f64::from(spec.height) - MARGIN_BOTTOM,
        }
    }

    fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x0) / (self.x1 - self.x0) * (self.right - self.left)
    }

    fn py(&self, y: f64) -> f64 {
        self.bottom - (y - self.y0) / (self.y1 - self.y0) * (self.bottom - self.top)
    }
}

fn check_finite<'a>(name: &str, values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("plot `{name}` contains non-finite values")))
    }
}

fn check_series(title: &str, series: &[Series]) -> Result<()> {
    if series.is_empty() || series.iter().any(|s| s.x.is_empty()) {
        return Err(Error::EmptyPlot(title.into()));
    }
    for s in series {
        if s.x.len() != s.y.len() {
            return Err(Error::LengthMismatch(s.x.len(), s.y.len()));
        }
        check_finite(title, s.x.iter().chain(&s.y))?;
    }
    Ok(())
}

fn series_range(series: &[Series]) -> ((f64, f64), (f64, f64)) {
    (min_max(series.iter().flat_map(|s| s.x.iter().copied())), min_max(series.iter().flat_map(|s| s.y.iter().copied())))
}

fn axes(out: &mut String, spec: &PlotSpec, f: &Frame, x_numeric: bool) {
    let _ = writeln!(
        out,
        r##"<line class="axis" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#333"/>"##,
        f.left, f.bottom, f.right, f.bottom
    );
    let _ = writeln!(
        out,
        r##"<line class="axis" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#333"/>"##,
        f.left, f.top, f.left, f.bottom
    );
    if x_numeric {
        let (ticks, dec) = nice_ticks(f.x0, f.x1);
        for t in ticks {
            let x = f.px(t);
            let _ = writeln!(
                out,
                r##"<line class="tick" x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/>"##,
                f.bottom,
                f.bottom + 5.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
                f.bottom + 18.0,
                escape(&fmt_tick(t, dec, spec.x_ticks))
            );
        }
    }
    let (ticks, dec) = nice_ticks(f.y0, f.y1);
    for t in ticks {
        let y = f.py(t);
        let _ = writeln!(
            out,
            r##"<line class="tick" x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#333"/>"##,
            f.left - 5.0,
            f.left
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#,
            f.left - 8.0,
            y + 4.0,
            escape(&fmt_tick(t, dec, TickFormat::Number))
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{}</text>"#,
        (f.left + f.right) / 2.0,
        f64::from(spec.height) - 14.0,
        escape(&spec.x_label)
    );
    let cy = (f.top + f.bottom) / 2.0;
    let _ = writeln!(
        out,
        r#"<text x="18.00" y="{cy:.2}" font-size="13" text-anchor="middle" transform="rotate(-90 18.00 {cy:.2})">{}</text>"#,
        escape(&spec.y_label)
    );
}

fn legend(out: &mut String, f: &Frame, names: &[&str]) {
    if names.len() < 2 {
        return;
    }
    for (i, name) in names.iter().enumerate() {
        let y = f.top + 14.0 * i as f64 + 4.0;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<rect class="legend" x="{:.2}" y="{:.2}" width="10" height="10" fill="{color}"/>"#,
            f.right - 130.0,
            y - 9.0
        );
        let _ = writeln!(out, r#"<text x="{:.2}" y="{y:.2}" font-size="11">{}</text>"#, f.right - 115.0, escape(name));
    }
}

fn points_attr(f: &Frame, s: &Series) -> String {
    s.x.iter().zip(&s.y).map(|(&x, &y)| format!("{:.2},{:.2}", f.px(x), f.py(y))).collect::<Vec<_>>().join(" ")
}

fn heat_color(t: f64) -> String {
    // light yellow to dark blue
    let (a, b) = ([255.0, 247.0, 188.0], [8.0, 48.0, 107.0]);
    let c: Vec<u8> = (0..3).map(|i| (a[i] + (b[i] - a[i]) * t.clamp(0.0, 1.0)).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn quantile(sorted: &[f64], level: f64) -> f64 {
    sorted[crate::copula::order_statistic_index(level, sorted.len())]
}

/// Render a plot to a standalone SVG document.
pub fn emit_svg(spec: &PlotSpec) -> Result<String> {
    let mut body = String::new();
    match &spec.data {
        PlotData::Line(series) | PlotData::Density(series) => {
            check_series(&spec.title, series)?;
            let (xr, mut yr) = series_range(series);
            if matches!(spec.data, PlotData::Density(_)) {
                yr.0 = yr.0.min(0.0);
            }
            let f = Frame::new(spec, xr, yr);
            axes(&mut body, spec, &f, true);
            let fill = matches!(spec.data, PlotData::Density(_));
            for (i, s) in series.iter().enumerate() {
                let color = PALETTE[i % PALETTE.len()];
                let fill_attr = if fill { format!(r#"{color}" fill-opacity="0.25"#) } else { "none".into() };
                let _ = writeln!(
                    body,
                    r#"<polyline class="series" fill="{fill_attr}" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    points_attr(&f, s)
                );
            }
            legend(&mut body, &f, &series.iter().map(|s| s.name.as_str()).collect::<Vec<_>>());
        }
        PlotData::Scatter(series) => {
            check_series(&spec.title, series)?;
            let (xr, yr) = series_range(series);
            let f = Frame::new(spec, xr, yr);
            axes(&mut body, spec, &f, true);
            for (i, s) in series.iter().enumerate() {
                let color = PALETTE[i % PALETTE.len()];
                let _ = writeln!(body, r#"<g class="series" fill="{color}" fill-opacity="0.5">"#);
                for (&x, &y) in s.x.iter().zip(&s.y) {
                    let _ = writeln!(body, r#"<circle cx="{:.2}" cy="{:.2}" r="1.8"/>"#, f.px(x), f.py(y));
                }
                body.push_str("</g>\n");
            }
            legend(&mut body, &f, &series.iter().map(|s| s.name.as_str()).collect::<Vec<_>>());
        }
        PlotData::Histogram { values, bins } => {
            if values.is_empty() || *bins == 0 {
                return Err(Error::EmptyPlot(spec.title.clone()));
            }
            check_finite(&spec.title, values)?;
            let (lo, hi) = padded(min_max(values.iter().copied()).0, min_max(values.iter().copied()).1);
            let width = (hi - lo) / *bins as f64;
            let mut counts = vec![0usize; *bins];
            for v in values {
                let k = (((v - lo) / width).floor() as usize).min(bins - 1);
                counts[k] += 1;
            }
            let top = *counts.iter().max().expect("bins > 0") as f64;
            let f = Frame::new(spec, (lo, hi), (0.0, top));
            axes(&mut body, spec, &f, true);
            for (k, &c) in counts.iter().enumerate() {
                let (a, b) = (f.px(lo + k as f64 * width), f.px(lo + (k + 1) as f64 * width));
                let y = f.py(c as f64);
                let _ = writeln!(
                    body,
                    r##"<rect class="bar" x="{a:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#1f77b4" stroke="#fff"/>"##,
                    b - a,
                    f.bottom - y
                );
            }
        }
        PlotData::Heatmap { x, y, z } => {
            if x.is_empty() || y.is_empty() || z.len() != y.len() || z.iter().any(|r| r.len() != x.len()) {
                return Err(Error::EmptyPlot(spec.title.clone()));
            }
            check_finite(&spec.title, x.iter().chain(y).chain(z.iter().flatten()))?;
            let half = |v: &[f64]| if v.len() > 1 { (v[1] - v[0]).abs() / 2.0 } else { 0.5 };
            let (hx, hy) = (half(x), half(y));
            let xr = min_max(x.iter().copied());
            let yr = min_max(y.iter().copied());
            let f = Frame::new(spec, (xr.0 - hx, xr.1 + hx), (yr.0 - hy, yr.1 + hy));
            let (zlo, zhi) = padded(min_max(z.iter().flatten().copied()).0, min_max(z.iter().flatten().copied()).1);
            for (i, row) in z.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    let (a, b) = (f.px(x[j] - hx), f.px(x[j] + hx));
                    let (c, d) = (f.py(y[i] + hy), f.py(y[i] - hy));
                    let _ = writeln!(
                        body,
                        r#"<rect class="cell" x="{a:.2}" y="{c:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                        b - a,
                        d - c,
                        heat_color((v - zlo) / (zhi - zlo))
                    );
                }
            }
            axes(&mut body, spec, &f, true);
        }
        PlotData::Boxes(groups) => {
            if groups.is_empty() || groups.iter().any(|(_, v)| v.is_empty()) {
                return Err(Error::EmptyPlot(spec.title.clone()));
            }
            check_finite(&spec.title, groups.iter().flat_map(|(_, v)| v))?;
            let yr = min_max(groups.iter().flat_map(|(_, v)| v.iter().copied()));
            let f = Frame::new(spec, (-0.5, groups.len() as f64 - 0.5), yr);
            axes(&mut body, spec, &f, false);
            for (k, (name, values)) in groups.iter().enumerate() {
                let mut s = values.clone();
                s.sort_by(f64::total_cmp);
                let cx = f.px(k as f64);
                let half = 0.3 * (f.px(1.0) - f.px(0.0));
                let (q05, q25, q50, q75, q95) =
                    (quantile(&s, 0.05), quantile(&s, 0.25), quantile(&s, 0.5), quantile(&s, 0.75), quantile(&s, 0.95));
                let _ = writeln!(
                    body,
                    r##"<line class="whisker" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="#333"/>"##,
                    f.py(q05),
                    f.py(q95)
                );
                let _ = writeln!(
                    body,
                    r##"<rect class="box" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}" stroke="#333"/>"##,
                    cx - half,
                    f.py(q75),
                    2.0 * half,
                    f.py(q25) - f.py(q75),
                    PALETTE[k % PALETTE.len()]
                );
                let _ = writeln!(
                    body,
                    r##"<line class="median" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#000" stroke-width="2"/>"##,
                    cx - half,
                    f.py(q50),
                    cx + half,
                    f.py(q50)
                );
                let _ = writeln!(
                    body,
                    r#"<text x="{cx:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
                    f.bottom + 18.0,
                    escape(name)
                );
            }
        }
        PlotData::Bars(bars) => {
            if bars.is_empty() {
                return Err(Error::EmptyPlot(spec.title.clone()));
            }
            check_finite(&spec.title, bars.iter().map(|(_, v)| v))?;
            let yr = min_max(bars.iter().map(|(_, v)| *v));
            let f = Frame::new(spec, (-0.5, bars.len() as f64 - 0.5), (yr.0.min(0.0), yr.1.max(0.0)));
            axes(&mut body, spec, &f, false);
            for (k, (name, v)) in bars.iter().enumerate() {
                let cx = f.px(k as f64);
                let half = 0.35 * (f.px(1.0) - f.px(0.0));
                let (top, base) = (f.py(v.max(0.0)), f.py(v.min(0.0)));
                let _ = writeln!(
                    body,
                    r#"<rect class="bar" x="{:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                    cx - half,
                    2.0 * half,
                    base - top,
                    PALETTE[k % PALETTE.len()]
                );
                let _ = writeln!(
                    body,
                    r#"<text x="{cx:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
                    f.bottom + 18.0,
                    escape(name)
                );
            }
        }
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#,
        w = spec.width,
        h = spec.height
    );
    let _ = writeln!(out, "<title>{}</title>", escape(&spec.title));
    out.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
    out.push('\n');
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="26.00" font-size="15" text-anchor="middle">{}</text>"#,
        f64::from(spec.width) / 2.0,
        escape(&spec.title)
    );
    out.push_str(&body);
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_plot_has_one_polyline_per_series() {
        let spec = PlotSpec::new(
            "Forecast",
            "date",
            "log sales",
            PlotData::Line(vec![
                Series::new("actual", vec![16000.0, 16001.0, 16002.0], vec![8.1, 8.3, 8.2]),
                Series::new("forecast", vec![16000.0, 16001.0, 16002.0], vec![8.15, 8.2, 8.25]),
            ]),
        )
        .with_date_axis();
        let svg = emit_svg(&spec).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("2013-10-22"));
        assert_eq!(svg, emit_svg(&spec).unwrap());
    }

    #[test]
    fn histogram_bar_count_matches_bins() {
        let values: Vec<f64> = (0..500).map(|i| (i as f64 * 0.37).sin()).collect();
        let spec = PlotSpec::new("draws", "value", "count", PlotData::Histogram { values, bins: 25 });
        assert_eq!(emit_svg(&spec).unwrap().matches(r#"class="bar""#).count(), 25);
    }

    #[test]
    fn empty_and_non_finite_inputs_rejected() {
        let empty = PlotSpec::new("e", "x", "y", PlotData::Line(vec![]));
        assert_eq!(emit_svg(&empty), Err(Error::EmptyPlot("e".into())));
        let bad = PlotSpec::new("b", "x", "y", PlotData::Scatter(vec![Series::indexed("s", vec![1.0, f64::NAN])]));
        assert!(emit_svg(&bad).is_err());
    }

    #[test]
    fn other_kinds_render() {
        let heat = PlotSpec::new(
            "pdf",
            "u",
            "v",
            PlotData::Heatmap { x: vec![0.25, 0.75], y: vec![0.25, 0.75], z: vec![vec![1.0, 0.5], vec![0.5, 1.0]] },
        );
        assert_eq!(emit_svg(&heat).unwrap().matches(r#"class="cell""#).count(), 4);
        let boxes = PlotSpec::new(
            "b",
            "",
            "",
            PlotData::Boxes(vec![("a".into(), vec![1.0, 2.0, 3.0]), ("b".into(), vec![2.0; 3])]),
        );
        assert_eq!(emit_svg(&boxes).unwrap().matches(r#"class="box""#).count(), 2);
        let d = kernel_density(&[0.0, 1.0, 1.5, 2.0], 64).unwrap();
        assert!(emit_svg(&PlotSpec::new("d", "x", "density", PlotData::Density(vec![d]))).is_ok());
    }

    #[test]
    fn ticks_are_round_numbers() {
        let (t, dec) = nice_ticks(0.03, 0.97);
        assert_eq!(dec, 1);
        assert_eq!(t.len(), 4);
        assert!((t[0] - 0.2).abs() < 1e-12);
        assert_eq!(fmt_tick(-0.0001, 2, TickFormat::Number), "0.00");
    }
}
