//! Hand-written SVG for scatter plots, histograms and seed-averaged curves.

use std::fmt::Write as _;

use fexp_core::verifier::Verifier;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;
/// Cells per axis of the grid the verifier outline is traced on.
const OUTLINE_GRID: usize = 160;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Axis-aligned data bounds mapped onto the plot area.
#[derive(Debug, Clone, Copy)]
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        Frame { x: padded(xs), y: padded(ys) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn padded(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    (lo - pad, hi + pad)
}

struct Svg {
    body: String,
}

impl Svg {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        let _ = write!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        body.push('\n');
        let _ = writeln!(body, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        if !title.is_empty() {
            let _ = writeln!(body, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
        }
        Svg { body }
    }

    fn axes(&mut self, frame: &Frame, x_label: &str, y_label: &str) {
        let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(self.body, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, b - t);
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = frame.x.0 + f * (frame.x.1 - frame.x.0);
            let yv = frame.y.0 + f * (frame.y.1 - frame.y.0);
            let (xp, yp) = (frame.px(xv), frame.py(yv));
            let _ = writeln!(self.body, r#"<line x1="{xp:.2}" y1="{b}" x2="{xp:.2}" y2="{}" stroke="black"/>"#, b + 5.0);
            let _ = writeln!(self.body, r#"<text x="{xp:.2}" y="{}" text-anchor="middle">{}</text>"#, b + 18.0, tick(xv));
            let _ = writeln!(self.body, r#"<line x1="{}" y1="{yp:.2}" x2="{l}" y2="{yp:.2}" stroke="black"/>"#, l - 5.0);
            let _ = writeln!(self.body, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, l - 8.0, yp + 4.0, tick(yv));
        }
        let _ = writeln!(self.body, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 14.0, escape(x_label));
        let _ = writeln!(
            self.body,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            HEIGHT / 2.0,
            escape(y_label)
        );
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn tick(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" { "0.00".into() } else { s }
}

/// Segments of the accept-set boundary, traced by marching squares on the
/// verifier's 0/1 output.
pub fn verifier_outline(verifier: &Verifier, x: (f64, f64), y: (f64, f64)) -> Vec<[(f64, f64); 2]> {
    let n = OUTLINE_GRID;
    let at = |i: usize, j: usize| {
        (x.0 + (x.1 - x.0) * i as f64 / n as f64, y.0 + (y.1 - y.0) * j as f64 / n as f64)
    };
    let inside: Vec<Vec<bool>> = (0..=n).map(|i| (0..=n).map(|j| {
        let (a, b) = at(i, j);
        verifier.accepts(&[a, b])
    }).collect()).collect();
    let mid = |p: (f64, f64), q: (f64, f64)| ((p.0 + q.0) / 2.0, (p.1 + q.1) / 2.0);
    let mut segments = Vec::new();
    for i in 0..n {
        for j in 0..n {
            // corners counter-clockwise from bottom-left
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let crossings: Vec<(f64, f64)> = (0..4)
                .filter_map(|e| {
                    let (a, b) = (corners[e], corners[(e + 1) % 4]);
                    (inside[a.0][a.1] != inside[b.0][b.1]).then(|| mid(at(a.0, a.1), at(b.0, b.1)))
                })
                .collect();
            match crossings.len() {
                2 => segments.push([crossings[0], crossings[1]]),
                4 => {
                    segments.push([crossings[0], crossings[1]]);
                    segments.push([crossings[2], crossings[3]]);
                }
                _ => {}
            }
        }
    }
    segments
}

pub struct ScatterInput<'a> {
    pub points: &'a [[f64; 2]],
    pub labels: Option<&'a [usize]>,
    pub verifier: Option<&'a Verifier>,
}

pub fn scatter2d(input: &ScatterInput<'_>, title: &str, x_label: &str, y_label: &str) -> String {
    let frame = Frame::fit(input.points.iter().map(|p| p[0]), input.points.iter().map(|p| p[1]));
    let mut svg = Svg::new(title);
    svg.axes(&frame, x_label, y_label);
    let _ = writeln!(svg.body, r#"<g id="points" fill-opacity="0.5">"#);
    for (i, p) in input.points.iter().enumerate() {
        if !(p[0].is_finite() && p[1].is_finite()) {
            continue;
        }
        let color = PALETTE[input.labels.map_or(0, |l| l[i]) % PALETTE.len()];
        let _ = writeln!(svg.body, r#"<circle cx="{:.2}" cy="{:.2}" r="1.6" fill="{color}"/>"#, frame.px(p[0]), frame.py(p[1]));
    }
    svg.body.push_str("</g>\n");
    if let Some(v) = input.verifier {
        let mut path = String::new();
        for [a, b] in verifier_outline(v, frame.x, frame.y) {
            let _ = write!(path, "M{:.2} {:.2}L{:.2} {:.2}", frame.px(a.0), frame.py(a.1), frame.px(b.0), frame.py(b.1));
        }
        let _ = writeln!(svg.body, r#"<path id="verifier" d="{path}" fill="none" stroke="black" stroke-width="1.5"/>"#);
    }
    svg.finish()
}

/// Equal-width bin counts over [min, max]; the maximum lands in the last bin.
pub fn histogram(values: &[f64], bins: usize) -> (f64, f64, Vec<usize>) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let (lo, hi) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if !lo.is_finite() { (0.0, 1.0) } else if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let mut counts = vec![0; bins.max(1)];
    let width = (hi - lo) / counts.len() as f64;
    for v in finite {
        let b = (((v - lo) / width) as usize).min(counts.len() - 1);
        counts[b] += 1;
    }
    (lo, hi, counts)
}

pub fn histogram1d(values: &[f64], bins: usize, title: &str, x_label: &str, y_label: &str) -> String {
    let (lo, hi, counts) = histogram(values, bins);
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let frame = Frame { x: (lo, hi), y: (0.0, top * 1.05) };
    let mut svg = Svg::new(title);
    svg.axes(&frame, x_label, y_label);
    let width = (hi - lo) / counts.len() as f64;
    let _ = writeln!(svg.body, r#"<g id="bins" fill="{}" stroke="white" stroke-width="0.5">"#, PALETTE[0]);
    for (b, &c) in counts.iter().enumerate() {
        let x0 = frame.px(lo + b as f64 * width);
        let x1 = frame.px(lo + (b + 1) as f64 * width);
        let y = frame.py(c as f64);
        let _ = writeln!(
            svg.body,
            r#"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" data-count="{c}"/>"#,
            x1 - x0,
            frame.py(0.0) - y
        );
    }
    svg.body.push_str("</g>\n");
    svg.finish()
}

/// Mean and 95% normal-approximation half-width (1.96 standard errors).
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// One point of a seed-averaged curve.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPoint {
    pub x: f64,
    pub mean: f64,
    pub half_width: f64,
}

/// Averages aligned per-seed series (`runs[s][i]` is seed s at `xs[i]`).
pub fn band(xs: &[f64], runs: &[Vec<f64>]) -> Vec<BandPoint> {
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let vals: Vec<f64> = runs.iter().map(|r| r[i]).collect();
            let (mean, half_width) = mean_ci(&vals);
            BandPoint { x, mean, half_width }
        })
        .collect()
}

pub fn curve(points: &[BandPoint], title: &str, x_label: &str, y_label: &str) -> String {
    let frame = Frame::fit(
        points.iter().map(|p| p.x),
        points.iter().flat_map(|p| [p.mean - p.half_width, p.mean + p.half_width]),
    );
    let mut svg = Svg::new(title);
    svg.axes(&frame, x_label, y_label);
    let mut area = String::new();
    for (i, p) in points.iter().enumerate() {
        let _ = write!(area, "{}{:.2} {:.2}", if i == 0 { "M" } else { "L" }, frame.px(p.x), frame.py(p.mean + p.half_width));
    }
    for p in points.iter().rev() {
        let _ = write!(area, "L{:.2} {:.2}", frame.px(p.x), frame.py(p.mean - p.half_width));
    }
    area.push('Z');
    let line: Vec<String> = points.iter().map(|p| format!("{:.2},{:.2}", frame.px(p.x), frame.py(p.mean))).collect();
    let _ = writeln!(svg.body, r#"<path id="band" d="{area}" fill="{}" fill-opacity="0.25" stroke="none"/>"#, PALETTE[0]);
    let _ = writeln!(svg.body, r#"<polyline id="mean" points="{}" fill="none" stroke="{}" stroke-width="2"/>"#, line.join(" "), PALETTE[0]);
    for p in points {
        let _ = writeln!(
            svg.body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" data-mean="{}" data-half-width="{}"/>"#,
            frame.px(p.x),
            frame.py(p.mean),
            PALETTE[0],
            p.mean,
            p.half_width
        );
    }
    svg.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use fexp_core::verifier::ellipse_verifier;

    #[test]
    fn histogram_counts_every_finite_value() {
        let values: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).chain([f64::NAN]).collect();
        let (_, _, counts) = histogram(&values, 17);
        assert_eq!(counts.len(), 17);
        assert_eq!(counts.iter().sum::<usize>(), 1000);
        let (_, _, single) = histogram(&[2.0, 2.0], 4);
        assert_eq!(single.iter().sum::<usize>(), 2);
    }

    #[test]
    fn confidence_band_is_1_96_standard_errors() {
        // sample sd of (1, 2, 3) is 1, so the half-width is 1.96/√3
        let (mean, hw) = mean_ci(&[1.0, 2.0, 3.0]);
        assert_eq!(mean, 2.0);
        assert!((hw - 1.96 / 3f64.sqrt()).abs() < 1e-15);
        let pts = band(&[0.0, 1.0], &[vec![1.0, 5.0], vec![3.0, 5.0]]);
        assert_eq!(pts[1], BandPoint { x: 1.0, mean: 5.0, half_width: 0.0 });
        assert!((pts[0].half_width - 1.96).abs() < 1e-15);
    }

    #[test]
    fn outline_traces_the_circle() {
        let v = ellipse_verifier(vec![0.0, 0.0], vec![1.0, 1.0], 0.0).unwrap();
        let segs = verifier_outline(&v, (-2.0, 2.0), (-2.0, 2.0));
        assert!(!segs.is_empty());
        let grid = 4.0 / OUTLINE_GRID as f64;
        for [a, b] in segs {
            for p in [a, b] {
                assert!(((p.0 * p.0 + p.1 * p.1).sqrt() - 1.0).abs() < grid);
            }
        }
    }

    #[test]
    fn labels_are_escaped() {
        let svg = histogram1d(&[1.0, 2.0], 2, "a < b & c", "x", "y");
        assert!(svg.contains("a &lt; b &amp; c"));
    }
}
