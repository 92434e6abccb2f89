//! Score tables, severity correlations, and SVG plots.
//!
//! All numbers are written with a fixed '.' decimal separator: four decimals
//! for scores and plot coordinates, six for correlation statistics.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DifferenceSpectrum, Level, ScoreRecord};

/// Fixed four-decimal formatting without a negative zero.
pub fn fmt4(v: f64) -> String {
    fixed(v, 4)
}

pub fn fmt6(v: f64) -> String {
    fixed(v, 6)
}

fn fixed(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

/// Quintile of a normalized score over [-1, 1]: 1 (lowest) to 5 (highest).
pub fn color_bucket(normalized: f64) -> u8 {
    let b = ((normalized + 1.0) / 0.4).floor();
    b.clamp(0.0, 4.0) as u8 + 1
}

/// Subject-level table: one row per subject, sorted by subject id.
pub fn score_table(records: &[ScoreRecord]) -> Result<String> {
    let mut sorted: Vec<&ScoreRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    let mut seen = HashSet::new();
    let mut out = String::from("subject_id,wsed_raw,wsed_normalized,trend_shape,trend_wsed,color_bucket\n");
    for r in sorted {
        if !seen.insert(r.subject_id.as_str()) {
            return Err(Error::DuplicateSubject(r.subject_id.clone()));
        }
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.subject_id,
            fmt4(r.wsed_raw),
            fmt4(r.wsed_normalized),
            r.trend_shape,
            r.trend_wsed,
            color_bucket(r.wsed_normalized)
        );
    }
    Ok(out)
}

fn opt4(v: Option<f64>) -> String {
    v.map(fmt4).unwrap_or_default()
}

/// Segment- or session-level table, in the order given.
pub fn detail_table(records: &[ScoreRecord]) -> String {
    let mut out = String::from(
        "subject_id,session_id,segment_index,wsed_raw,wsed_normalized,trend_shape,trend_wsed,bprs_total,bprs_positive,bprs_negative\n",
    );
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.subject_id,
            r.session_id.as_deref().unwrap_or(""),
            r.segment_index.map(|i| i.to_string()).unwrap_or_default(),
            fmt4(r.wsed_raw),
            fmt4(r.wsed_normalized),
            r.trend_shape,
            r.trend_wsed,
            opt4(r.bprs.total),
            opt4(r.bprs.positive),
            opt4(r.bprs.negative),
        );
    }
    out
}

/// One point of a WSED-versus-severity plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityPoint {
    pub id: String,
    pub wsed_normalized: f64,
    pub bprs_total: f64,
    pub bprs_pos_minus_neg: f64,
}

impl SeverityPoint {
    /// `None` when the record lacks the BPRS fields a plot needs.
    pub fn from_record(r: &ScoreRecord) -> Option<Self> {
        let id = match (r.level, &r.session_id) {
            (Level::Subject, _) | (_, None) => r.subject_id.clone(),
            (_, Some(s)) => format!("{}/{}", r.subject_id, s),
        };
        Some(SeverityPoint {
            id,
            wsed_normalized: r.wsed_normalized,
            bprs_total: r.bprs.total?,
            bprs_pos_minus_neg: r.bprs.pos_minus_neg()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeverityField {
    Wsed,
    BprsTotal,
    PosMinusNeg,
}

impl SeverityField {
    pub fn get(self, p: &SeverityPoint) -> f64 {
        match self {
            SeverityField::Wsed => p.wsed_normalized,
            SeverityField::BprsTotal => p.bprs_total,
            SeverityField::PosMinusNeg => p.bprs_pos_minus_neg,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            SeverityField::Wsed => "wsed_normalized",
            SeverityField::BprsTotal => "bprs_total",
            SeverityField::PosMinusNeg => "bprs_pos_minus_neg",
        }
    }

    pub fn axis_label(self) -> &'static str {
        match self {
            SeverityField::Wsed => "mean WSED (normalized)",
            SeverityField::BprsTotal => "BPRS total",
            SeverityField::PosMinusNeg => "BPRS positive - negative subscale",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationStats {
    pub pearson_r: f64,
    pub spearman_rho: f64,
    pub n: usize,
}

fn check_axis(values: &[f64], axis: &str) -> Result<()> {
    let first = values[0];
    if values.iter().all(|v| *v == first) {
        return Err(Error::Correlation(format!("zero variance on {axis} axis")));
    }
    Ok(())
}

/// Two-pass Pearson correlation. Callers guarantee equal lengths, n >= 2,
/// and non-constant inputs.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    pearson(&average_ranks(xs), &average_ranks(ys))
}

pub fn correlation(
    points: &[SeverityPoint],
    x_field: SeverityField,
    y_field: SeverityField,
) -> Result<CorrelationStats> {
    if points.len() < 3 {
        return Err(Error::Correlation(format!("need at least 3 points, got {}", points.len())));
    }
    let xs: Vec<f64> = points.iter().map(|p| x_field.get(p)).collect();
    let ys: Vec<f64> = points.iter().map(|p| y_field.get(p)).collect();
    check_axis(&xs, x_field.key())?;
    check_axis(&ys, y_field.key())?;
    Ok(CorrelationStats {
        pearson_r: pearson(&xs, &ys),
        spearman_rho: spearman(&xs, &ys),
        n: points.len(),
    })
}

/// Least-squares `(intercept, slope)`, or `None` for constant x or n < 2.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    if xs.len() < 2 || xs.iter().all(|x| *x == xs[0]) {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 610.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 370.0;

/// Linear map from a data interval onto a pixel interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub px_lo: f64,
    pub px_hi: f64,
}

impl Axis {
    /// Covers `[min, max]` with 5% padding; degenerate ranges widen by 1.
    fn covering(min: f64, max: f64, px_lo: f64, px_hi: f64) -> Self {
        let (lo, hi) = if max > min {
            let pad = 0.05 * (max - min);
            (min - pad, max + pad)
        } else {
            (min - 1.0, max + 1.0)
        };
        Axis { lo, hi, px_lo, px_hi }
    }

    pub fn map(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn svg_open(out: &mut String, title: &str) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = WIDTH,
        h = HEIGHT
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="28" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        fmt4(WIDTH / 2.0),
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        RIGHT - LEFT,
        BOTTOM - TOP
    );
}

fn axis_labels(out: &mut String, x_label: &str, y_label: &str, x: &Axis, y: &Axis) {
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        fmt4((LEFT + RIGHT) / 2.0),
        fmt4(HEIGHT - 12.0),
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{cy}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {cy})">{}</text>"#,
        escape(y_label),
        cy = fmt4((TOP + BOTTOM) / 2.0)
    );
    let tick = |out: &mut String, px: f64, py: f64, anchor: &str, v: f64| {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{}</text>"#,
            fmt4(px),
            fmt4(py),
            fmt4(v)
        );
    };
    tick(out, LEFT, BOTTOM + 16.0, "start", x.lo);
    tick(out, RIGHT, BOTTOM + 16.0, "end", x.hi);
    tick(out, LEFT - 4.0, BOTTOM, "end", y.lo);
    tick(out, LEFT - 4.0, TOP + 8.0, "end", y.hi);
}

/// Pixel geometry of a difference-spectrum plot.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceLayout {
    pub x: Axis,
    pub y: Axis,
    pub vertices: Vec<(f64, f64)>,
    pub zero_y: f64,
}

pub fn difference_layout(d: &DifferenceSpectrum) -> Result<DifferenceLayout> {
    if d.is_empty() {
        return Err(Error::Empty("difference spectrum has no ranks".into()));
    }
    let n = d.len();
    let min = d.values.iter().copied().fold(0.0f64, f64::min);
    let max = d.values.iter().copied().fold(0.0f64, f64::max);
    let x = Axis::covering(1.0, n as f64, LEFT, RIGHT);
    let y = Axis::covering(min, max, BOTTOM, TOP);
    let vertices = d
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| (x.map((i + 1) as f64), y.map(*v)))
        .collect();
    Ok(DifferenceLayout {
        zero_y: y.map(0.0),
        x,
        y,
        vertices,
    })
}

pub fn render_difference_svg(d: &DifferenceSpectrum, title: &str) -> Result<String> {
    let layout = difference_layout(d)?;
    let mut out = String::new();
    svg_open(&mut out, title);
    let _ = writeln!(
        out,
        r##"<line x1="{LEFT}" y1="{z}" x2="{RIGHT}" y2="{z}" stroke="#888888" stroke-dasharray="4 3"/>"##,
        z = fmt4(layout.zero_y)
    );
    let points: Vec<String> = layout
        .vertices
        .iter()
        .map(|(x, y)| format!("{},{}", fmt4(*x), fmt4(*y)))
        .collect();
    let _ = writeln!(
        out,
        r##"<polyline fill="none" stroke="#1f4e9c" stroke-width="1.5" points="{}"/>"##,
        points.join(" ")
    );
    axis_labels(&mut out, "rank", "eigenvalue difference", &layout.x, &layout.y);
    out.push_str("</svg>\n");
    Ok(out)
}

fn write_file(out: &Path, body: &str) -> Result<()> {
    fs::write(out, body).map_err(|e| Error::io(out, e))
}

/// Writes the rank-versus-difference plot of one spectrum.
pub fn plot_difference_spectrum(d: &DifferenceSpectrum, title: &str, out: &Path) -> Result<()> {
    write_file(out, &render_difference_svg(d, title)?)
}

/// Pixel geometry of a scatter plot with an optional trend line.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterLayout {
    pub x: Axis,
    pub y: Axis,
    pub markers: Vec<(f64, f64)>,
    /// Pixel endpoints of the least-squares line over the data's x range.
    pub trend: Option<((f64, f64), (f64, f64))>,
    /// `(intercept, slope)` in data units.
    pub fit: Option<(f64, f64)>,
    pub pearson_r: Option<f64>,
}

pub fn scatter_layout(points: &[SeverityPoint], x_field: SeverityField) -> Result<ScatterLayout> {
    if points.is_empty() {
        return Err(Error::Empty("scatter plot needs at least one point".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| x_field.get(p)).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.wsed_normalized).collect();
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (x_min, x_max) = (min(&xs), max(&xs));
    let x = Axis::covering(x_min, x_max, LEFT, RIGHT);
    let y = Axis::covering(min(&ys), max(&ys), BOTTOM, TOP);
    let markers = xs.iter().zip(&ys).map(|(a, b)| (x.map(*a), y.map(*b))).collect();
    let fit = if points.len() >= 3 { least_squares(&xs, &ys) } else { None };
    let trend = fit.map(|(a, b)| {
        (
            (x.map(x_min), y.map(a + b * x_min)),
            (x.map(x_max), y.map(a + b * x_max)),
        )
    });
    let pearson_r = correlation(points, x_field, SeverityField::Wsed)
        .ok()
        .map(|c| c.pearson_r);
    Ok(ScatterLayout {
        x,
        y,
        markers,
        trend,
        fit,
        pearson_r,
    })
}

pub fn render_scatter_svg(points: &[SeverityPoint], x_field: SeverityField, title: &str) -> Result<String> {
    let layout = scatter_layout(points, x_field)?;
    let mut out = String::new();
    svg_open(&mut out, title);
    if let Some(((x1, y1), (x2, y2))) = layout.trend {
        let _ = writeln!(
            out,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#c0392b" stroke-width="1.5"/>"##,
            fmt4(x1),
            fmt4(y1),
            fmt4(x2),
            fmt4(y2)
        );
    }
    for ((cx, cy), p) in layout.markers.iter().zip(points) {
        let _ = writeln!(
            out,
            r##"<circle cx="{}" cy="{}" r="4" fill="#1f4e9c" fill-opacity="0.8"><title>{}</title></circle>"##,
            fmt4(*cx),
            fmt4(*cy),
            escape(&p.id)
        );
    }
    if let Some(r) = layout.pearson_r {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="end">r = {}</text>"#,
            fmt4(RIGHT - 6.0),
            fmt4(TOP + 16.0),
            fmt6(r)
        );
    }
    axis_labels(&mut out, x_field.axis_label(), SeverityField::Wsed.axis_label(), &layout.x, &layout.y);
    out.push_str("</svg>\n");
    Ok(out)
}

/// Writes a WSED-versus-severity scatter plot.
pub fn plot_scatter(points: &[SeverityPoint], x_field: SeverityField, title: &str, out: &Path) -> Result<()> {
    write_file(out, &render_scatter_svg(points, x_field, title)?)
}
