//! Data-faithful SVG plots: polylines with error bars, no external plotting
//! dependency. All text content is escaped, so the output is well-formed XML
//! by construction.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

const PALETTE: &[&str] = &[
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    /// `(x, y, y_err)`; the error bar spans `y - y_err ..= y + y_err`.
    pub points: Vec<(f64, f64, f64)>,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Scale {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Scale {
    fn from_series(series: &[Series]) -> Self {
        let mut x_lo = f64::INFINITY;
        let mut x_hi = f64::NEG_INFINITY;
        let mut y_lo: f64 = 0.0;
        let mut y_hi = f64::NEG_INFINITY;
        for s in series {
            for &(x, y, e) in &s.points {
                x_lo = x_lo.min(x);
                x_hi = x_hi.max(x);
                y_lo = y_lo.min(y - e);
                y_hi = y_hi.max(y + e);
            }
        }
        if !x_lo.is_finite() || x_hi <= x_lo {
            x_hi = x_lo + 1.0;
        }
        if !y_hi.is_finite() || y_hi <= y_lo {
            y_hi = y_lo + 1.0;
        }
        Self { x_lo, x_hi, y_lo, y_hi: y_hi + 0.05 * (y_hi - y_lo) }
    }

    fn x(&self, v: f64) -> f64 {
        MARGIN_L + (v - self.x_lo) / (self.x_hi - self.x_lo) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN_B - (v - self.y_lo) / (self.y_hi - self.y_lo) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

/// Renders a line chart with per-point error bars and a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let scale = Scale::from_series(series);
    let mut out = String::new();
    write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    )
    .unwrap();
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    write!(
        out,
        "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{}</text>",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        escape(title)
    )
    .unwrap();

    // Axes.
    let x0 = scale.x(scale.x_lo);
    let x1 = scale.x(scale.x_hi);
    let y0 = scale.y(scale.y_lo);
    let y1 = scale.y(scale.y_hi);
    write!(out, "<line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{x1:.1}\" y2=\"{y0:.1}\" stroke=\"black\"/>").unwrap();
    write!(out, "<line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{x0:.1}\" y2=\"{y1:.1}\" stroke=\"black\"/>").unwrap();
    for i in 0..=4 {
        let fx = scale.x_lo + (scale.x_hi - scale.x_lo) * i as f64 / 4.0;
        let fy = scale.y_lo + (scale.y_hi - scale.y_lo) * i as f64 / 4.0;
        write!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            scale.x(fx),
            y0 + 16.0,
            format_tick(fx)
        )
        .unwrap();
        write!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            x0 - 6.0,
            scale.y(fy) + 4.0,
            format_tick(fy)
        )
        .unwrap();
        write!(
            out,
            "<line x1=\"{x0:.1}\" y1=\"{:.1}\" x2=\"{x1:.1}\" y2=\"{:.1}\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>",
            scale.y(fy),
            scale.y(fy)
        )
        .unwrap();
    }
    write!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
        (x0 + x1) / 2.0,
        HEIGHT - 14.0,
        escape(x_label)
    )
    .unwrap();
    write!(
        out,
        "<text x=\"18\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 18 {:.1})\">{}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    )
    .unwrap();

    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        if s.points.len() > 1 {
            let path: Vec<String> =
                s.points.iter().map(|&(x, y, _)| format!("{:.2},{:.2}", scale.x(x), scale.y(y))).collect();
            write!(
                out,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
                path.join(" ")
            )
            .unwrap();
        }
        for &(x, y, e) in &s.points {
            let cx = scale.x(x);
            write!(out, "<circle cx=\"{cx:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\"/>", scale.y(y)).unwrap();
            if e > 0.0 {
                let top = scale.y(y + e);
                let bottom = scale.y(y - e);
                write!(
                    out,
                    "<line x1=\"{cx:.2}\" y1=\"{top:.2}\" x2=\"{cx:.2}\" y2=\"{bottom:.2}\" stroke=\"{color}\"/>"
                )
                .unwrap();
                for tip in [top, bottom] {
                    write!(
                        out,
                        "<line x1=\"{:.2}\" y1=\"{tip:.2}\" x2=\"{:.2}\" y2=\"{tip:.2}\" stroke=\"{color}\"/>",
                        cx - 3.0,
                        cx + 3.0
                    )
                    .unwrap();
                }
            }
        }
        let ly = MARGIN_T + 16.0 * si as f64;
        let lx = WIDTH - MARGIN_R + 12.0;
        write!(
            out,
            "<line x1=\"{lx:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            lx + 18.0
        )
        .unwrap();
        write!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            lx + 24.0,
            ly + 4.0,
            escape(&s.label)
        )
        .unwrap();
    }
    out.push_str("</svg>");
    out
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 10_000.0 || a < 0.01 {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Minimal well-formedness check used by the test suites: tags balance and
/// no stray `<` or `>` appears in text content.
pub fn is_well_formed_xml(text: &str) -> bool {
    let mut stack: Vec<String> = Vec::new();
    let mut rest = text;
    loop {
        let Some(open) = rest.find('<') else {
            return stack.is_empty() && !rest.contains('>');
        };
        if rest[..open].contains('>') {
            return false;
        }
        let Some(close) = rest[open..].find('>') else { return false };
        let tag = &rest[open + 1..open + close];
        rest = &rest[open + close + 1..];
        if let Some(name) = tag.strip_prefix('/') {
            if stack.pop().as_deref() != Some(name) {
                return false;
            }
        } else if !tag.ends_with('/') && !tag.starts_with('?') && !tag.starts_with('!') {
            let name = tag.split_whitespace().next().unwrap_or("");
            stack.push(name.to_string());
        }
    }
}
