//! Self-contained SVG plots with deterministic bytes.

use std::fmt::Write;

use crate::error::{CliError, ErrorKind};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 58.0;
const TICKS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvgKind {
    Step,
    LogLog,
    Weyl,
    EigfunHeatmap,
}

impl SvgKind {
    pub fn name(self) -> &'static str {
        match self {
            SvgKind::Step => "step",
            SvgKind::LogLog => "loglog",
            SvgKind::Weyl => "weyl",
            SvgKind::EigfunHeatmap => "eigfun-heatmap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SvgSeries {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Data points; layout coordinates for a heatmap.
    pub points: Vec<(f64, f64)>,
    /// Heatmap values, one per point.
    pub values: Vec<f64>,
    /// `(slope, intercept)` of `ln y = slope ln x + intercept`; the loglog
    /// plot fits its own points when absent.
    pub fit: Option<(f64, f64)>,
}

impl SvgSeries {
    pub fn new(title: &str, x_label: &str, y_label: &str, points: Vec<(f64, f64)>) -> Self {
        SvgSeries {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            points,
            ..Default::default()
        }
    }
}

fn empty(msg: &str) -> CliError {
    CliError {
        kind: ErrorKind::Config,
        message: msg.into(),
        key: None,
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_tick(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let a = x.abs();
    if !(1e-3..1e5).contains(&a) {
        format!("{x:.2e}")
    } else if a >= 100.0 {
        format!("{x:.0}")
    } else {
        let s = format!("{x:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Affine map from a data interval onto a pixel interval.
#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    p0: f64,
    p1: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, p0: f64, p1: f64) -> Self {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        if hi - lo <= 1e-12 * hi.abs().max(1.0) {
            let pad = 0.5 * hi.abs().max(1.0);
            lo -= pad;
            hi += pad;
        }
        Axis { lo, hi, p0, p1 }
    }

    fn px(&self, v: f64) -> f64 {
        self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)
    }
}

struct Canvas {
    out: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut out = String::new();
        writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        )
        .unwrap();
        writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
        writeln!(
            out,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        )
        .unwrap();
        Canvas { out }
    }

    /// Frame, ticks and axis labels. `log` axes label `10^v`.
    fn axes(&mut self, xa: &Axis, ya: &Axis, x_label: &str, y_label: &str, log: (bool, bool)) {
        let o = &mut self.out;
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
        writeln!(
            o,
            r#"<rect class="frame" x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y0 - y1
        )
        .unwrap();
        for i in 0..TICKS {
            let t = i as f64 / (TICKS - 1) as f64;
            let xv = xa.lo + t * (xa.hi - xa.lo);
            let yv = ya.lo + t * (ya.hi - ya.lo);
            let xl = if log.0 { fmt_tick(10f64.powf(xv)) } else { fmt_tick(xv) };
            let yl = if log.1 { fmt_tick(10f64.powf(yv)) } else { fmt_tick(yv) };
            let (px, py) = (xa.px(xv), ya.px(yv));
            writeln!(o, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{xl}</text>"#, y0 + 16.0).unwrap();
            writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{yl}</text>"#, x0 - 6.0, py + 4.0).unwrap();
        }
        writeln!(
            o,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 16.0,
            escape(x_label)
        )
        .unwrap();
        writeln!(
            o,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(y_label)
        )
        .unwrap();
    }

    fn polyline(&mut self, class: &str, color: &str, pts: &[(f64, f64)]) {
        let mut coords = String::new();
        for (i, (x, y)) in pts.iter().enumerate() {
            if i > 0 {
                coords.push(' ');
            }
            write!(coords, "{x:.2},{y:.2}").unwrap();
        }
        writeln!(
            self.out,
            r#"<polyline class="{class}" fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>"#
        )
        .unwrap();
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// Step path through sorted points: horizontal to the next `x`, then up.
fn step_path(pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut path = vec![pts[0]];
    for w in pts.windows(2) {
        path.push((w[1].0, w[0].1));
        path.push(w[1]);
    }
    path
}

fn least_squares(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| {
        let slope = sxy / sxx;
        (slope, my - slope * mx)
    })
}

/// Diverging blue-white-red colour for `t` in `[-1, 1]`.
pub fn diverging_color(t: f64) -> String {
    let t = t.clamp(-1.0, 1.0);
    let (end, s) = if t < 0.0 { ((33.0, 102.0, 172.0), -t) } else { ((178.0, 24.0, 43.0), t) };
    let mix = |e: f64| (255.0 + s * (e - 255.0)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(end.0), mix(end.1), mix(end.2))
}

fn plot_xy(series: &SvgSeries, pts: &[(f64, f64)], log: (bool, bool), step: bool) -> Canvas {
    let mut c = Canvas::new(&series.title);
    let xa = Axis::new(pts.iter().map(|p| p.0), LEFT, WIDTH - RIGHT);
    let ya = Axis::new(pts.iter().map(|p| p.1), HEIGHT - BOTTOM, TOP);
    c.axes(&xa, &ya, &series.x_label, &series.y_label, log);
    let shape = if step { step_path(pts) } else { pts.to_vec() };
    let px: Vec<(f64, f64)> = shape.iter().map(|&(x, y)| (xa.px(x), ya.px(y))).collect();
    c.polyline("series", "#1f4e79", &px);
    if let Some((slope, intercept)) = series.fit.filter(|_| log == (true, true)) {
        // the fit is in natural logs, the axes in log10
        let line = |x: f64| slope * x + intercept / std::f64::consts::LN_10;
        let (x0, x1) = (xa.lo, xa.hi);
        writeln!(
            c.out,
            r##"<line class="fit" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#b2182b" stroke-dasharray="6 4"/>"##,
            xa.px(x0),
            ya.px(line(x0)),
            xa.px(x1),
            ya.px(line(x1))
        )
        .unwrap();
        writeln!(
            c.out,
            r##"<text class="slope" x="{:.2}" y="{:.2}" fill="#b2182b">slope {slope:.4}</text>"##,
            LEFT + 10.0,
            TOP + 18.0
        )
        .unwrap();
    }
    c
}

/// Renders `series` as `kind`.
pub fn render_svg(series: &SvgSeries, kind: SvgKind) -> Result<String, CliError> {
    if series.points.is_empty() {
        return Err(empty("cannot plot an empty series"));
    }
    if series.points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(empty("series contains non-finite points"));
    }
    match kind {
        SvgKind::Step => {
            let mut pts = series.points.clone();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            Ok(plot_xy(series, &pts, (false, false), true).finish())
        }
        SvgKind::LogLog => {
            let mut pts: Vec<(f64, f64)> = series
                .points
                .iter()
                .filter(|p| p.0 > 0.0 && p.1 > 0.0)
                .map(|p| (p.0.log10(), p.1.log10()))
                .collect();
            if pts.is_empty() {
                return Err(empty("no positive points for a log-log plot"));
            }
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut s = series.clone();
            if s.fit.is_none() {
                // fit in natural logs, like the library
                let ln: Vec<(f64, f64)> = pts
                    .iter()
                    .map(|p| (p.0 * std::f64::consts::LN_10, p.1 * std::f64::consts::LN_10))
                    .collect();
                s.fit = least_squares(&ln);
            }
            Ok(plot_xy(&s, &pts, (true, true), true).finish())
        }
        SvgKind::Weyl => {
            let mut pts: Vec<(f64, f64)> = series
                .points
                .iter()
                .filter(|p| p.0 > 0.0)
                .map(|p| (p.0.log10(), p.1))
                .collect();
            if pts.is_empty() {
                return Err(empty("no positive abscissae for a Weyl plot"));
            }
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            Ok(plot_xy(series, &pts, (true, false), false).finish())
        }
        SvgKind::EigfunHeatmap => heatmap(series),
    }
}

fn heatmap(series: &SvgSeries) -> Result<String, CliError> {
    if series.values.len() != series.points.len() {
        return Err(empty("heatmap needs one value per point"));
    }
    let mut c = Canvas::new(&series.title);
    // equal aspect so the fractal is not distorted
    let (w, h) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let bx = Axis::new(series.points.iter().map(|p| p.0), 0.0, 1.0);
    let by = Axis::new(series.points.iter().map(|p| p.1), 0.0, 1.0);
    let scale = (w / (bx.hi - bx.lo)).min(h / (by.hi - by.lo));
    let ox = LEFT + (w - scale * (bx.hi - bx.lo)) / 2.0;
    let oy = HEIGHT - BOTTOM - (h - scale * (by.hi - by.lo)) / 2.0;
    let vmax = series.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let radius = (2.5 * 300.0 / (series.points.len() as f64).sqrt()).clamp(1.2, 7.0);
    for (&(x, y), &v) in series.points.iter().zip(&series.values) {
        let t = if vmax > 0.0 { v / vmax } else { 0.0 };
        writeln!(
            c.out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{radius:.2}" fill="{}"/>"#,
            ox + (x - bx.lo) * scale,
            oy - (y - by.lo) * scale,
            diverging_color(t)
        )
        .unwrap();
    }
    // colour bar
    let (bar_x, bar_y) = (WIDTH - RIGHT - 150.0, HEIGHT - 30.0);
    for i in 0..=20 {
        let t = -1.0 + i as f64 / 10.0;
        writeln!(
            c.out,
            r#"<rect x="{:.2}" y="{bar_y:.2}" width="7" height="10" fill="{}"/>"#,
            bar_x + 7.0 * i as f64,
            diverging_color(t)
        )
        .unwrap();
    }
    writeln!(
        c.out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{} = &#177;{}</text>"#,
        bar_x - 6.0,
        bar_y + 9.0,
        escape(&series.y_label),
        fmt_tick(vmax)
    )
    .unwrap();
    writeln!(
        c.out,
        r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
        LEFT,
        bar_y + 9.0,
        escape(&series.x_label)
    )
    .unwrap();
    Ok(c.finish())
}
