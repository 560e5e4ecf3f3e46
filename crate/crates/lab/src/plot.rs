//! Static SVG line plots. Output depends only on the input, so identical
//! series give byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::LabError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;
const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, xs: &[f64], ys: &[f64]) -> Self {
        Self { name: name.into(), points: xs.iter().copied().zip(ys.iter().copied()).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x: false,
            log_y: false,
            series: Vec::new(),
        }
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }

    pub fn log_x(mut self) -> Self {
        self.log_x = true;
        self
    }

    pub fn with(mut self, series: Series) -> Self {
        self.series.push(series);
        self
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn axis(values: impl Iterator<Item = f64>, log: bool) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        let v = if log { v.log10() } else { v };
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi - lo <= 1e-300 * hi.abs().max(1.0) {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn tick_label(v: f64, log: bool) -> String {
    if log {
        format!("1e{v:.1}")
    } else {
        format!("{v:.3e}")
    }
}

/// Renders the plot. Needs at least one series, two finite points per series,
/// and positive values on log axes.
pub fn render_svg(plot: &Plot) -> Result<String, LabError> {
    if plot.series.is_empty() {
        return Err(LabError::Usage("plot has no series".into()));
    }
    for s in &plot.series {
        if s.points.len() < 2 {
            return Err(LabError::Usage(format!("series `{}` has fewer than 2 points", s.name)));
        }
        for &(x, y) in &s.points {
            if !x.is_finite() || !y.is_finite() {
                return Err(LabError::Usage(format!("series `{}` has a non-finite point", s.name)));
            }
            if (plot.log_x && x <= 0.0) || (plot.log_y && y <= 0.0) {
                return Err(LabError::Usage(format!("series `{}` has a nonpositive value on a log axis", s.name)));
            }
        }
    }
    let all = || plot.series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = axis(all().map(|p| p.0), plot.log_x);
    let (y0, y1) = axis(all().map(|p| p.1), plot.log_y);
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let px = |x: f64| LEFT + (if plot.log_x { x.log10() } else { x } - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + ph - (if plot.log_y { y.log10() } else { y } - y0) / (y1 - y0) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
        WIDTH / 2.0,
        escape(&plot.title)
    );
    let _ =
        writeln!(out, "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>");
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (tx, ty) = (LEFT + f * pw, TOP + ph - f * ph);
        let _ = writeln!(
            out,
            "<line x1=\"{tx:.2}\" y1=\"{:.2}\" x2=\"{tx:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
            TOP + ph,
            TOP + ph + 5.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{tx:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            TOP + ph + 18.0,
            tick_label(xv, plot.log_x)
        );
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{ty:.2}\" x2=\"{LEFT}\" y2=\"{ty:.2}\" stroke=\"black\"/>",
            LEFT - 5.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            LEFT - 8.0,
            ty + 4.0,
            tick_label(yv, plot.log_y)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
        LEFT + pw / 2.0,
        HEIGHT - 15.0,
        escape(&plot.x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"15\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 15 {:.2})\">{}</text>",
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&plot.y_label)
    );
    for (i, s) in plot.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        );
        let ly = TOP + 14.0 + 16.0 * i as f64;
        let lx = LEFT + pw - 150.0;
        let _ = writeln!(
            out,
            "<line x1=\"{lx:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            lx + 20.0
        );
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>", lx + 26.0, ly + 4.0, escape(&s.name));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_plot(plot: &Plot, path: &Path) -> Result<(), LabError> {
    let svg = render_svg(plot)?;
    std::fs::write(path, svg).map_err(|source| LabError::Io { path: path.to_path_buf(), source })
}
