//! Minimal self-contained SVG plots: axes, ticks, polylines and markers,
//! and a legend, plus a sibling CSV of the plotted points so external tools
//! never have to scrape the SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const PLOT_LEFT: f64 = 70.0;
const PLOT_TOP: f64 = 48.0;
const PLOT_RIGHT: f64 = 630.0;
const PLOT_BOTTOM: f64 = 440.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("plot needs at least one series with at least one point")]
    EmptySeries,
    #[error("series `{series}` contains a non-finite point")]
    NonFinitePoint { series: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Connected polyline.
    Line,
    /// Unconnected circular markers.
    Scatter,
}

#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub name: String,
    pub kind: PlotKind,
    pub points: Vec<(f64, f64)>,
}

impl PlotSeries {
    pub fn line(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        PlotSeries {
            name: name.into(),
            kind: PlotKind::Line,
            points,
        }
    }

    pub fn scatter(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        PlotSeries {
            name: name.into(),
            kind: PlotKind::Scatter,
            points,
        }
    }
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Data range padded by 5%; a zero-width range becomes a unit span around
/// the single value.
fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Short tick label: fixed precision with trailing zeros trimmed.
fn tick_label(v: f64) -> String {
    let mut s = format!("{v:.6}");
    while s.contains('.') && (s.ends_with('0') || s.ends_with('.')) {
        let trailing_dot = s.ends_with('.');
        s.pop();
        if trailing_dot {
            break;
        }
    }
    if s == "-0" {
        s = String::from("0");
    }
    s
}

/// Writes an 800x500 SVG and a sibling `<stem>.points.csv` listing every
/// plotted point as `series,x,y`.
pub fn emit_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[PlotSeries],
) -> Result<(), PlotError> {
    if series.iter().all(|s| s.points.is_empty()) {
        return Err(PlotError::EmptySeries);
    }
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            if !(x.is_finite() && y.is_finite()) {
                return Err(PlotError::NonFinitePoint {
                    series: s.name.clone(),
                });
            }
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
            y_lo = y_lo.min(y);
            y_hi = y_hi.max(y);
        }
    }
    let (x_lo, x_hi) = padded_range(x_lo, x_hi);
    let (y_lo, y_hi) = padded_range(y_lo, y_hi);
    let to_px = |x: f64| PLOT_LEFT + (x - x_lo) / (x_hi - x_lo) * (PLOT_RIGHT - PLOT_LEFT);
    let to_py = |y: f64| PLOT_BOTTOM - (y - y_lo) / (y_hi - y_lo) * (PLOT_BOTTOM - PLOT_TOP);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        svg,
        r##"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{PLOT_LEFT}" y="{PLOT_TOP}" width="{}" height="{}" fill="#fafafa" stroke="#cccccc" stroke-width="1"/>"##,
        PLOT_RIGHT - PLOT_LEFT,
        PLOT_BOTTOM - PLOT_TOP
    );
    let _ = writeln!(
        svg,
        r##"<text x="{}" y="28" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"##,
        (PLOT_LEFT + PLOT_RIGHT) / 2.0,
        xml_escape(title)
    );

    // Ticks and grid: five divisions per axis.
    for i in 0..=4 {
        let f = f64::from(i) / 4.0;
        let x = x_lo + f * (x_hi - x_lo);
        let px = to_px(x);
        let _ = writeln!(
            svg,
            r##"<line x1="{px}" y1="{PLOT_BOTTOM}" x2="{px}" y2="{}" stroke="#000000" stroke-width="1"/>"##,
            PLOT_BOTTOM + 5.0
        );
        let _ = writeln!(
            svg,
            r##"<text x="{px}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"##,
            PLOT_BOTTOM + 18.0,
            tick_label(x)
        );
        let y = y_lo + f * (y_hi - y_lo);
        let py = to_py(y);
        let _ = writeln!(
            svg,
            r##"<line x1="{}" y1="{py}" x2="{PLOT_LEFT}" y2="{py}" stroke="#000000" stroke-width="1"/>"##,
            PLOT_LEFT - 5.0
        );
        let _ = writeln!(
            svg,
            r##"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"##,
            PLOT_LEFT - 8.0,
            py + 4.0,
            tick_label(y)
        );
    }
    let _ = writeln!(
        svg,
        r##"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"##,
        (PLOT_LEFT + PLOT_RIGHT) / 2.0,
        PLOT_BOTTOM + 42.0,
        xml_escape(x_label)
    );
    let _ = writeln!(
        svg,
        r##"<text x="18" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"##,
        (PLOT_TOP + PLOT_BOTTOM) / 2.0,
        (PLOT_TOP + PLOT_BOTTOM) / 2.0,
        xml_escape(y_label)
    );

    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        match s.kind {
            PlotKind::Line => {
                if s.points.len() == 1 {
                    let (x, y) = s.points[0];
                    let _ = writeln!(
                        svg,
                        r#"<circle cx="{}" cy="{}" r="3" fill="{color}"/>"#,
                        to_px(x),
                        to_py(y)
                    );
                } else if !s.points.is_empty() {
                    let mut coords = String::new();
                    for &(x, y) in &s.points {
                        let _ = write!(coords, "{},{} ", to_px(x), to_py(y));
                    }
                    coords.pop();
                    let _ = writeln!(
                        svg,
                        r#"<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
                    );
                }
            }
            PlotKind::Scatter => {
                for &(x, y) in &s.points {
                    let _ = writeln!(
                        svg,
                        r#"<circle cx="{}" cy="{}" r="3" fill="{color}"/>"#,
                        to_px(x),
                        to_py(y)
                    );
                }
            }
        }
        // Legend row.
        let ly = PLOT_TOP + 14.0 + 18.0 * idx as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#,
            PLOT_RIGHT + 14.0,
            PLOT_RIGHT + 38.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            PLOT_RIGHT + 44.0,
            ly + 4.0,
            xml_escape(&s.name)
        );
    }
    let _ = writeln!(svg, "</svg>");
    fs::write(path, &svg).map_err(|source| PlotError::Io {
        path: path.to_path_buf(),
        source,
    })?;

    let mut csv = String::from("series,x,y\n");
    for s in series {
        for &(x, y) in &s.points {
            let _ = writeln!(csv, "{},{},{}", s.name, x, y);
        }
    }
    let sibling = path.with_extension("points.csv");
    fs::write(&sibling, &csv).map_err(|source| PlotError::Io {
        path: sibling.clone(),
        source,
    })
}
