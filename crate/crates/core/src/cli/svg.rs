//! Minimal SVG emitter for line plots and scatter plots.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

pub struct Plot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub points: &'a [(f64, f64)],
    /// Horizontal reference line, drawn dashed.
    pub threshold: Option<f64>,
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

impl Plot<'_> {
    fn frame(&self, out: &mut String) -> impl Fn(f64, f64) -> (f64, f64) {
        let (x0, x1) = bounds(self.points.iter().map(|p| p.0));
        let (y0, y1) = bounds(self.points.iter().map(|p| p.1).chain(self.threshold).chain([0.0]));
        let (pw, ph) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(self.title));
        let _ = writeln!(out, r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 12.0, escape(self.x_label));
        let _ = writeln!(
            out,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(self.y_label)
        );
        for (v, x, y, anchor) in [
            (x0, MARGIN, HEIGHT - MARGIN + 16.0, "start"),
            (x1, WIDTH - MARGIN, HEIGHT - MARGIN + 16.0, "end"),
            (y0, MARGIN - 4.0, HEIGHT - MARGIN, "end"),
            (y1, MARGIN - 4.0, MARGIN + 4.0, "end"),
        ] {
            let _ = writeln!(out, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{}</text>"#, tick(v));
        }
        move |x, y| (MARGIN + (x - x0) / (x1 - x0) * pw, HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ph)
    }

    fn threshold_line(&self, out: &mut String, map: &impl Fn(f64, f64) -> (f64, f64)) {
        if let Some(t) = self.threshold {
            let (_, y) = map(0.0, t);
            let _ = writeln!(
                out,
                r#"<line x1="{MARGIN}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="firebrick" stroke-dasharray="6 4"/>"#,
                WIDTH - MARGIN
            );
        }
    }

    pub fn line(&self) -> String {
        let mut out = String::new();
        let map = self.frame(&mut out);
        self.threshold_line(&mut out, &map);
        let pts: Vec<String> = self
            .points
            .iter()
            .map(|&(x, y)| {
                let (a, b) = map(x, y);
                format!("{a:.2},{b:.2}")
            })
            .collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        out.push_str("</svg>\n");
        out
    }

    pub fn scatter(&self) -> String {
        let mut out = String::new();
        let map = self.frame(&mut out);
        self.threshold_line(&mut out, &map);
        for &(x, y) in self.points {
            let (a, b) = map(x, y);
            let _ = writeln!(out, r#"<circle cx="{a:.2}" cy="{b:.2}" r="3" fill="steelblue" fill-opacity="0.6"/>"#);
        }
        out.push_str("</svg>\n");
        out
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
