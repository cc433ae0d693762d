//! Minimal static SVG charts: stacked panels of lines, bands and markers.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const PANEL_H: f64 = 200.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const GAP: f64 = 40.0;

#[derive(Debug, Clone)]
pub enum Layer {
    /// Polyline; `None` breaks the line.
    Line { ys: Vec<Option<f64>>, color: &'static str, dashed: bool },
    /// Filled area between two curves.
    Band { low: Vec<Option<f64>>, high: Vec<Option<f64>>, color: &'static str },
    /// Dots at (x, y), with x in data units.
    Points { xs: Vec<f64>, ys: Vec<f64>, color: &'static str },
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub layers: Vec<Layer>,
    /// Vertical marker at this x index.
    pub marker: Option<f64>,
    pub zero_line: bool,
}

impl Panel {
    pub fn new(title: impl Into<String>) -> Self {
        Panel {
            title: title.into(),
            layers: Vec::new(),
            marker: None,
            zero_line: false,
        }
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        let mut see = |x: f64, y: f64| {
            if x.is_finite() && y.is_finite() {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        };
        for l in &self.layers {
            match l {
                Layer::Line { ys, .. } => ys.iter().enumerate().for_each(|(i, y)| {
                    if let Some(y) = y {
                        see(i as f64, *y)
                    }
                }),
                Layer::Band { low, high, .. } => {
                    for (i, (a, b)) in low.iter().zip(high).enumerate() {
                        if let (Some(a), Some(b)) = (a, b) {
                            see(i as f64, *a);
                            see(i as f64, *b);
                        }
                    }
                }
                Layer::Points { xs, ys, .. } => xs.iter().zip(ys).for_each(|(x, y)| see(*x, *y)),
            }
        }
        if self.zero_line {
            y0 = y0.min(0.0);
            y1 = y1.max(0.0);
        }
        if !x0.is_finite() {
            return (0.0, 1.0, 0.0, 1.0);
        }
        if x1 == x0 {
            x1 = x0 + 1.0;
        }
        if y1 == y0 {
            y0 -= 1.0;
            y1 += 1.0;
        }
        let pad = 0.05 * (y1 - y0);
        (x0, x1, y0 - pad, y1 + pad)
    }
}

fn fmt_num(v: f64) -> String {
    if v.abs() >= 1000.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders the panels stacked vertically. `x_labels` annotate the first and
/// last x positions.
pub fn render(title: &str, panels: &[Panel], x_labels: (&str, &str)) -> String {
    let height = MARGIN_T + panels.len() as f64 * (PANEL_H + GAP) + 10.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{MARGIN_L}" y="18" font-size="14">{}</text>"#, esc(title));
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    for (k, p) in panels.iter().enumerate() {
        let top = MARGIN_T + k as f64 * (PANEL_H + GAP) + 16.0;
        let (x0, x1, y0, y1) = p.bounds();
        let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * plot_w;
        let py = |y: f64| top + PANEL_H - (y - y0) / (y1 - y0) * PANEL_H;
        let _ = writeln!(s, r#"<text x="{MARGIN_L}" y="{:.1}">{}</text>"#, top - 4.0, esc(&p.title));
        let _ = writeln!(
            s,
            r##"<rect x="{MARGIN_L}" y="{top:.1}" width="{plot_w:.1}" height="{PANEL_H}" fill="none" stroke="#888"/>"##
        );
        for (v, y) in [(y1, top + 10.0), (y0, top + PANEL_H)] {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{y:.1}" text-anchor="end">{}</text>"#,
                MARGIN_L - 4.0,
                fmt_num(v)
            );
        }
        if p.zero_line && y0 < 0.0 && y1 > 0.0 {
            let _ = writeln!(
                s,
                r##"<line x1="{MARGIN_L}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#444" stroke-width="0.5"/>"##,
                MARGIN_L + plot_w,
                py(0.0),
                py(0.0)
            );
        }
        for l in &p.layers {
            match l {
                Layer::Band { low, high, color } => {
                    let idx: Vec<usize> = (0..low.len().min(high.len()))
                        .filter(|i| low[*i].is_some() && high[*i].is_some())
                        .collect();
                    if idx.is_empty() {
                        continue;
                    }
                    let mut d = String::new();
                    for (n, i) in idx.iter().enumerate() {
                        let _ = write!(d, "{}{:.1},{:.1} ", if n == 0 { "M" } else { "L" }, px(*i as f64), py(high[*i].unwrap_or(0.0)));
                    }
                    for i in idx.iter().rev() {
                        let _ = write!(d, "L{:.1},{:.1} ", px(*i as f64), py(low[*i].unwrap_or(0.0)));
                    }
                    let _ = writeln!(s, r#"<path d="{}Z" fill="{color}" fill-opacity="0.25" stroke="none"/>"#, d);
                }
                Layer::Line { ys, color, dashed } => {
                    let mut d = String::new();
                    let mut pen_down = false;
                    for (i, y) in ys.iter().enumerate() {
                        match y {
                            Some(y) if y.is_finite() => {
                                let _ = write!(d, "{}{:.1},{:.1} ", if pen_down { "L" } else { "M" }, px(i as f64), py(*y));
                                pen_down = true;
                            }
                            _ => pen_down = false,
                        }
                    }
                    let dash = if *dashed { r#" stroke-dasharray="4 3""# } else { "" };
                    let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.2"{dash}/>"#, d.trim_end());
                }
                Layer::Points { xs, ys, color } => {
                    for (x, y) in xs.iter().zip(ys) {
                        let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{color}" fill-opacity="0.7"/>"#, px(*x), py(*y));
                    }
                }
            }
        }
        if let Some(m) = p.marker {
            let _ = writeln!(
                s,
                r##"<line x1="{0:.1}" x2="{0:.1}" y1="{top:.1}" y2="{1:.1}" stroke="#c00" stroke-dasharray="2 2"/>"##,
                px(m),
                top + PANEL_H
            );
        }
        let _ = writeln!(s, r#"<text x="{MARGIN_L}" y="{:.1}">{}</text>"#, top + PANEL_H + 13.0, esc(x_labels.0));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN_L + plot_w,
            top + PANEL_H + 13.0,
            esc(x_labels.1)
        );
    }
    s.push_str("</svg>\n");
    s
}
