//! Minimal hand-written SVG plots. Output depends only on the input data,
//! so regenerating a plot gives identical bytes.

use std::fmt::Write;

use crate::dataset::{ORIGIN_INDEX, VIEWS_PER_SERIES};
use crate::report::histograms::ScoreHistograms;
use crate::report::scatter::ScatterPoint;
use crate::scoring::ErrorCurve;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

struct Plot {
    body: String,
    x: (f64, f64),
    y: (f64, f64),
    legend: usize,
}

impl Plot {
    fn new(title: &str, x_label: &str, y_label: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        let mut body = String::new();
        let _ = writeln!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(body, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            body,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(
            body,
            r#"<path d="M{l} {t}V{b}H{r}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            body,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 12.0,
            escape(x_label)
        );
        let _ = writeln!(
            body,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(y_label)
        );
        let mut plot = Plot { body, x, y, legend: 0 };
        for k in 0..=4 {
            let v = y.0 + (y.1 - y.0) * k as f64 / 4.0;
            let py = plot.py(v);
            let _ = writeln!(
                plot.body,
                r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                l - 6.0,
                py + 4.0,
                num(v)
            );
        }
        plot
    }

    fn px(&self, v: f64) -> f64 {
        MARGIN + (v - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, v: f64) -> f64 {
        HEIGHT - MARGIN - (v - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }

    fn x_tick(&mut self, v: f64, label: &str) {
        let px = self.px(v);
        let _ = writeln!(
            self.body,
            r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
            HEIGHT - MARGIN + 16.0,
            escape(label)
        );
    }

    fn polyline(&mut self, points: &[(f64, f64)], color: &str, label: &str) {
        let coords: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        let _ = writeln!(
            self.body,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
            coords.join(" "),
            escape(label)
        );
        let ly = MARGIN + 14.0 * self.legend as f64;
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{ly:.2}" fill="{color}" text-anchor="end">{}</text>"#,
            WIDTH - MARGIN,
            escape(label)
        );
        self.legend += 1;
    }

    fn dot(&mut self, x: f64, y: f64, color: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}" fill-opacity="0.6"/>"#,
            self.px(x),
            self.py(y)
        );
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" { "0.00".into() } else { s }
}

/// Error rate against radius, one polyline per curve. Curves should share
/// a VT and contrast mode.
pub fn curves_svg(curves: &[&ErrorCurve], title: &str) -> String {
    let mut radii: Vec<_> = curves.iter().flat_map(|c| c.points.iter().map(|p| p.radius)).collect();
    radii.sort();
    radii.dedup();
    let n = radii.len().max(2) as f64;
    let mut plot = Plot::new(title, "exclusion radius", "error rate", (0.0, n - 1.0), (0.0, 1.0));
    for (i, r) in radii.iter().enumerate() {
        plot.x_tick(i as f64, &r.to_string());
    }
    for (k, c) in curves.iter().enumerate() {
        let pts: Vec<(f64, f64)> = c
            .points
            .iter()
            .filter_map(|p| {
                let x = radii.iter().position(|r| *r == p.radius)? as f64;
                Some((x, p.error_rate?))
            })
            .collect();
        let label = format!("{} ({})", c.level.as_str(), c.grouping);
        plot.polyline(&pts, PALETTE[k % PALETTE.len()], &label);
    }
    plot.finish()
}

/// Positive histograms per radius and the negative histogram, as step lines
/// of bin fractions.
pub fn histogram_svg(h: &ScoreHistograms) -> String {
    let title = format!("{} ({}, {})", h.reference, h.level.as_str(), h.contrast.as_str());
    let series: Vec<(String, &super::histograms::Histogram)> = h
        .per_radius
        .iter()
        .map(|r| (format!("positives r={}", r.radius), &r.positives))
        .chain(std::iter::once(("negatives".to_string(), &h.negatives)))
        .collect();
    let fraction = |hist: &super::histograms::Histogram, b: usize| {
        if hist.total == 0 { 0.0 } else { hist.counts[b] as f64 / hist.total as f64 }
    };
    let y_max = series
        .iter()
        .flat_map(|(_, hist)| (0..hist.counts.len()).map(move |b| fraction(hist, b)))
        .fold(0.0f64, f64::max)
        .max(1e-3);
    let mut plot = Plot::new(&title, "cosine similarity", "fraction of candidates", (-1.0, 1.0), (0.0, y_max));
    for v in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        plot.x_tick(v, &num(v));
    }
    for (k, (label, hist)) in series.iter().enumerate() {
        let mut pts = Vec::with_capacity(hist.counts.len() * 2);
        for b in 0..hist.counts.len() {
            let f = fraction(hist, b);
            pts.push((hist.edge(b), f));
            pts.push((hist.edge(b + 1), f));
        }
        plot.polyline(&pts, PALETTE[k % PALETTE.len()], label);
    }
    plot.finish()
}

/// Top negative against top positive, with the y = x diagonal.
pub fn scatter_svg(points: &[ScatterPoint], title: &str) -> String {
    let mut plot = Plot::new(title, "top negative score", "top positive score", (-1.0, 1.0), (-1.0, 1.0));
    for v in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        plot.x_tick(v, &num(v));
    }
    plot.polyline(&[(-1.0, -1.0), (1.0, 1.0)], "#888888", "y = x");
    for p in points {
        if let Some(x) = p.top_negative {
            let color = if p.below_diagonal() { PALETTE[1] } else { PALETTE[0] };
            plot.dot(x, p.top_positive, color);
        }
    }
    plot.finish()
}

/// Similarity of each series view to the origin view, one line per object.
pub fn tuning_svg(curves: &[(String, [[f64; VIEWS_PER_SERIES]; VIEWS_PER_SERIES])], title: &str) -> String {
    let lo = curves
        .iter()
        .flat_map(|(_, m)| m[ORIGIN_INDEX as usize - 1].iter().copied())
        .fold(0.0f64, f64::min);
    let mut plot = Plot::new(
        title,
        "view index",
        "similarity to origin view",
        (1.0, VIEWS_PER_SERIES as f64),
        (lo, 1.0),
    );
    for i in 1..=VIEWS_PER_SERIES {
        plot.x_tick(i as f64, &i.to_string());
    }
    for (k, (name, m)) in curves.iter().enumerate() {
        let pts: Vec<(f64, f64)> = m[ORIGIN_INDEX as usize - 1]
            .iter()
            .enumerate()
            .map(|(j, &s)| ((j + 1) as f64, s))
            .collect();
        plot.polyline(&pts, PALETTE[k % PALETTE.len()], name);
    }
    plot.finish()
}
