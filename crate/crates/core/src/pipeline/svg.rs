//! Minimal SVG charts built from path and text primitives.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 48.0;

pub const PALETTE: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#7f7f7f"];

#[derive(Debug, Clone)]
pub struct Line {
    pub name: String,
    pub color: String,
    /// Gaps (`None`) break the line.
    pub points: Vec<(f64, Option<f64>)>,
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

fn span<I: IntoIterator<Item = f64>>(vals: I) -> (f64, f64) {
    let (lo, hi) = vals
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn axes(&self, s: &mut String, title: &str, x_label: &str, y_label: &str) {
        let _ = write!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - LEFT - RIGHT,
            H - TOP - BOTTOM
        );
        let _ = write!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
        let _ = write!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
            (LEFT + W - RIGHT) / 2.0,
            H - 8.0,
            escape(x_label)
        );
        let _ = write!(
            s,
            r#"<text x="14" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(y_label)
        );
        for i in 0..=4 {
            let fx = self.x.0 + (self.x.1 - self.x.0) * i as f64 / 4.0;
            let fy = self.y.0 + (self.y.1 - self.y.0) * i as f64 / 4.0;
            let _ = write!(
                s,
                r#"<text x="{:.1}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
                self.px(fx),
                H - BOTTOM + 14.0,
                tick(fx)
            );
            let _ = write!(
                s,
                r#"<text x="{}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"#,
                LEFT - 4.0,
                self.py(fy) + 3.0,
                tick(fy)
            );
        }
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open() -> String {
    format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}"><rect width="100%" height="100%" fill="white"/>"#)
}

fn polyline(f: &Frame, pts: impl Iterator<Item = (f64, Option<f64>)>) -> String {
    let mut d = String::new();
    let mut pen_down = false;
    for (x, y) in pts {
        match y.filter(|v| v.is_finite()) {
            Some(y) => {
                let _ = write!(d, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, f.px(x), f.py(y));
                pen_down = true;
            }
            None => pen_down = false,
        }
    }
    d
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, lines: &[Line]) -> String {
    let frame = Frame {
        x: span(lines.iter().flat_map(|l| l.points.iter().map(|p| p.0))),
        y: span(lines.iter().flat_map(|l| l.points.iter().filter_map(|p| p.1))),
    };
    let mut s = open();
    frame.axes(&mut s, title, x_label, y_label);
    for (k, l) in lines.iter().enumerate() {
        let _ = write!(
            s,
            r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            polyline(&frame, l.points.iter().copied()),
            l.color
        );
        let _ = write!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{}">{}</text>"#,
            LEFT + 8.0,
            TOP + 14.0 + 14.0 * k as f64,
            l.color,
            escape(&l.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn scatter(title: &str, x_label: &str, y_label: &str, pts: &[(f64, f64)], fit: Option<(f64, f64)>) -> String {
    let frame = Frame { x: span(pts.iter().map(|p| p.0)), y: span(pts.iter().map(|p| p.1)) };
    let mut s = open();
    frame.axes(&mut s, title, x_label, y_label);
    for (x, y) in pts {
        let _ = write!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}"/>"#, frame.px(*x), frame.py(*y), PALETTE[0]);
    }
    if let Some((slope, intercept)) = fit {
        let (a, b) = frame.x;
        let _ = write!(
            s,
            r#"<path d="M{:.2},{:.2} L{:.2},{:.2}" stroke="{}" stroke-width="1.5"/>"#,
            frame.px(a),
            frame.py(intercept + slope * a),
            frame.px(b),
            frame.py(intercept + slope * b),
            PALETTE[1]
        );
    }
    s.push_str("</svg>\n");
    s
}

/// `values[i * ys.len() + j]` is drawn at `(xs[i], ys[j])` on a blue-white-red scale.
pub fn heatmap(title: &str, x_label: &str, y_label: &str, xs: &[f64], ys: &[f64], values: &[f64]) -> String {
    let frame = Frame { x: span(xs.iter().copied()), y: span(ys.iter().copied()) };
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let cw = (W - LEFT - RIGHT) / xs.len().max(1) as f64;
    let ch = (H - TOP - BOTTOM) / ys.len().max(1) as f64;
    let mut s = open();
    for (i, x) in xs.iter().enumerate() {
        for (j, y) in ys.iter().enumerate() {
            let v = (values[i * ys.len() + j] / scale).clamp(-1.0, 1.0);
            let (r, g, b) = if v >= 0.0 {
                (255.0, 255.0 * (1.0 - v), 255.0 * (1.0 - v))
            } else {
                (255.0 * (1.0 + v), 255.0 * (1.0 + v), 255.0)
            };
            let _ = write!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({:.0},{:.0},{:.0})"/>"#,
                frame.px(*x) - cw / 2.0,
                frame.py(*y) - ch / 2.0,
                cw + 0.3,
                ch + 0.3,
                r,
                g,
                b
            );
        }
    }
    frame.axes(&mut s, title, x_label, y_label);
    s.push_str("</svg>\n");
    s
}

/// Estimate with a shaded band; a dashed line marks zero.
pub fn band_plot(title: &str, x_label: &str, y_label: &str, x: &[f64], y: &[f64], lo: &[f64], hi: &[f64]) -> String {
    let frame = Frame {
        x: span(x.iter().copied()),
        y: span(lo.iter().chain(hi).copied().chain([0.0])),
    };
    let mut s = open();
    frame.axes(&mut s, title, x_label, y_label);
    let mut d = String::new();
    for (k, (xi, h)) in x.iter().zip(hi).enumerate() {
        let _ = write!(d, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, frame.px(*xi), frame.py(*h));
    }
    for (xi, l) in x.iter().zip(lo).rev() {
        let _ = write!(d, "L{:.2},{:.2} ", frame.px(*xi), frame.py(*l));
    }
    let _ = write!(s, r#"<path d="{d}Z" fill="{}" fill-opacity="0.25" stroke="none"/>"#, PALETTE[3]);
    let _ = write!(
        s,
        r#"<path d="M{LEFT},{:.2} L{},{:.2}" stroke="black" stroke-dasharray="4 3"/>"#,
        frame.py(0.0),
        W - RIGHT,
        frame.py(0.0)
    );
    let _ = write!(
        s,
        r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.8"/>"#,
        polyline(&frame, x.iter().zip(y).map(|(a, b)| (*a, Some(*b)))),
        PALETTE[0]
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaps_break_lines() {
        let f = Frame { x: (0.0, 3.0), y: (0.0, 1.0) };
        let d = polyline(&f, [(0.0, Some(0.0)), (1.0, None), (2.0, Some(1.0)), (3.0, Some(0.5))].into_iter());
        assert_eq!(d.matches('M').count(), 2);
        assert_eq!(d.matches('L').count(), 1);
    }

    #[test]
    fn documents_are_closed() {
        let s = scatter("a<b", "x", "y", &[(0.0, 1.0), (1.0, 2.0)], Some((1.0, 1.0)));
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a&lt;b"));
    }
}
