//! Minimal SVG emission: line plots with an optional error band and marker,
//! and bar histograms. Output is plain geometry with fixed-precision
//! coordinates and carries no timestamps, so files are byte-reproducible.

use std::fmt::Write as _;
use std::path::Path;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn from_ranges(xs: &[f64], ys: &[f64]) -> Frame {
        let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &x in xs {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
        }
        let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &y in ys {
            if y.is_finite() {
                y_min = y_min.min(y);
                y_max = y_max.max(y);
            }
        }
        if x_min == x_max {
            x_min -= 0.5;
            x_max += 0.5;
        }
        if y_min == y_max {
            y_min -= 0.5;
            y_max += 0.5;
        }
        let pad = 0.06 * (y_max - y_min);
        Frame {
            x_min,
            x_max,
            y_min: y_min - pad,
            y_max: y_max + pad,
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn c(v: f64) -> String {
    format!("{v:.2}")
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" \
         text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    );
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(s: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let y1 = MARGIN_T;
    let _ = write!(
        s,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    );
    for k in 0..=5 {
        let t = k as f64 / 5.0;
        let xv = f.x_min + t * (f.x_max - f.x_min);
        let yv = f.y_min + t * (f.y_max - f.y_min);
        let xp = f.px(xv);
        let yp = f.py(yv);
        let _ = write!(
            s,
            "<line x1=\"{}\" y1=\"{y0}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{}</text>\n",
            c(xp),
            c(xp),
            c(y0 + 5.0),
            c(xp),
            c(y0 + 18.0),
            format_tick(xv)
        );
        let _ = write!(
            s,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{x0}\" y2=\"{}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{}</text>\n",
            c(x0 - 5.0),
            c(yp),
            c(yp),
            c(x0 - 8.0),
            c(yp + 4.0),
            format_tick(yv)
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">{}</text>",
        c((x0 + x1) / 2.0),
        c(HEIGHT - 12.0),
        escape(x_label)
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>",
        c((y0 + y1) / 2.0),
        c((y0 + y1) / 2.0),
        escape(y_label)
    );
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (0.001..10_000.0).contains(&a) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

/// Line plot of `y` against `x` with an optional `+-band` region and an
/// optional vertical marker (e.g. the selected eta).
pub fn line_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    x: &[f64],
    y: &[f64],
    band: Option<&[f64]>,
    marker: Option<(f64, &str)>,
) -> std::io::Result<()> {
    let mut all_y: Vec<f64> = y.to_vec();
    if let Some(b) = band {
        for (yy, bb) in y.iter().zip(b) {
            all_y.push(yy + bb);
            all_y.push(yy - bb);
        }
    }
    let f = Frame::from_ranges(x, &all_y);
    let mut s = header(title);
    axes(&mut s, &f, x_label, y_label);

    if let Some(b) = band {
        let mut points = String::new();
        for i in 0..x.len() {
            let _ = write!(points, "{},{} ", c(f.px(x[i])), c(f.py(y[i] + b[i])));
        }
        for i in (0..x.len()).rev() {
            let _ = write!(points, "{},{} ", c(f.px(x[i])), c(f.py(y[i] - b[i])));
        }
        let _ = writeln!(
            s,
            "<polygon points=\"{}\" fill=\"#9ecae1\" fill-opacity=\"0.45\" stroke=\"none\"/>",
            points.trim_end()
        );
    }
    if let Some((mx, label)) = marker {
        let xp = f.px(mx);
        let _ = write!(
            s,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#d62728\" \
             stroke-dasharray=\"5,3\"/>\n\
             <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             fill=\"#d62728\" text-anchor=\"middle\">{}</text>\n",
            c(xp),
            c(HEIGHT - MARGIN_B),
            c(xp),
            c(MARGIN_T),
            c(xp),
            c(MARGIN_T - 6.0),
            escape(label)
        );
    }
    let mut points = String::new();
    for i in 0..x.len() {
        if y[i].is_finite() {
            let _ = write!(points, "{},{} ", c(f.px(x[i])), c(f.py(y[i])));
        }
    }
    let _ = writeln!(
        s,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.8\"/>",
        points.trim_end()
    );
    for i in 0..x.len() {
        if y[i].is_finite() {
            let _ = writeln!(
                s,
                "<circle cx=\"{}\" cy=\"{}\" r=\"2.4\" fill=\"#1f77b4\"/>",
                c(f.px(x[i])),
                c(f.py(y[i]))
            );
        }
    }
    s.push_str("</svg>\n");
    std::fs::write(path, s)
}

/// Bar histogram over explicit bin centers and counts.
pub fn histogram(
    path: &Path,
    title: &str,
    x_label: &str,
    centers: &[f64],
    counts: &[f64],
) -> std::io::Result<()> {
    let width = if centers.len() > 1 {
        centers[1] - centers[0]
    } else {
        1.0
    };
    let xs: Vec<f64> = centers
        .iter()
        .flat_map(|&v| [v - width / 2.0, v + width / 2.0])
        .collect();
    let mut ys = counts.to_vec();
    ys.push(0.0);
    let f = Frame::from_ranges(&xs, &ys);
    let mut s = header(title);
    axes(&mut s, &f, x_label, "count");
    for (i, &cnt) in counts.iter().enumerate() {
        let x_lo = f.px(centers[i] - 0.45 * width);
        let x_hi = f.px(centers[i] + 0.45 * width);
        let y_top = f.py(cnt);
        let y_base = f.py(0.0f64.max(f.y_min));
        let _ = writeln!(
            s,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#1f77b4\" \
             fill-opacity=\"0.85\"/>",
            c(x_lo),
            c(y_top),
            c(x_hi - x_lo),
            c((y_base - y_top).max(0.0))
        );
    }
    s.push_str("</svg>\n");
    std::fs::write(path, s)
}

/// Histogram of raw values over `bins` equal-width bins.
pub fn histogram_of(
    path: &Path,
    title: &str,
    x_label: &str,
    values: &[f64],
    bins: usize,
) -> std::io::Result<()> {
    if values.is_empty() {
        return histogram(path, title, x_label, &[0.0], &[0.0]);
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let w = span / bins as f64;
    let mut counts = vec![0.0; bins];
    for &v in values {
        let k = (((v - lo) / w) as usize).min(bins - 1);
        counts[k] += 1.0;
    }
    let centers: Vec<f64> = (0..bins).map(|k| lo + (k as f64 + 0.5) * w).collect();
    histogram(path, title, x_label, &centers, &counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_bytes_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.svg");
        let b = dir.path().join("b.svg");
        let x: Vec<f64> = (0..21).map(|i| i as f64 / 20.0).collect();
        let y: Vec<f64> = x.iter().map(|v| (v - 0.4) * (v - 0.4)).collect();
        let band: Vec<f64> = x.iter().map(|_| 0.01).collect();
        line_plot(&a, "t", "eta", "-elpd", &x, &y, Some(&band), Some((0.4, "eta*"))).unwrap();
        line_plot(&b, "t", "eta", "-elpd", &x, &y, Some(&band), Some((0.4, "eta*"))).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let text = std::fs::read_to_string(&a).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("polyline"));
    }

    #[test]
    fn histogram_handles_flat_data() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.svg");
        histogram_of(&p, "h", "x", &[1.0, 1.0, 1.0], 10).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().contains("rect"));
    }
}
