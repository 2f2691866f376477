//! Minimal SVG line plots.

use std::fmt::Write;

pub struct Series {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 48.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Mean line with a shaded mean +/- std band. Points are placed at evenly
/// spaced positions labelled with their x values, since sweeps are rarely
/// linear in level.
pub fn svg_band_plot(title: &str, x_label: &str, y_label: &str, s: &Series) -> String {
    let n = s.x.len();
    let lo = s.mean.iter().zip(&s.std).map(|(m, d)| m - d).fold(f64::INFINITY, f64::min);
    let hi = s.mean.iter().zip(&s.std).map(|(m, d)| m + d).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if n == 0 || !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-9 {
        (lo - 0.05, hi + 0.05)
    } else {
        (lo - 0.05 * (hi - lo), hi + 0.05 * (hi - lo))
    };
    let px = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
    let py = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<line x1="{MARGIN}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{0}" stroke="black"/>"#,
        HEIGHT - MARGIN,
        WIDTH - MARGIN
    );
    if n > 0 {
        let mut band: Vec<String> = (0..n).map(|i| format!("{:.2},{:.2}", px(i), py(s.mean[i] + s.std[i]))).collect();
        band.extend((0..n).rev().map(|i| format!("{:.2},{:.2}", px(i), py(s.mean[i] - s.std[i]))));
        let _ = writeln!(out, r##"<polygon points="{}" fill="#9ecae1" fill-opacity="0.5"/>"##, band.join(" "));
        let line: Vec<String> = (0..n).map(|i| format!("{:.2},{:.2}", px(i), py(s.mean[i]))).collect();
        let _ = writeln!(out, r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="2"/>"##, line.join(" "));
        for i in 0..n {
            let _ = writeln!(
                out,
                r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#08519c"/><text x="{:.2}" y="{}" text-anchor="middle">{}</text>"##,
                px(i),
                py(s.mean[i]),
                px(i),
                HEIGHT - MARGIN + 16.0,
                s.x[i]
            );
        }
    }
    for v in [lo, (lo + hi) / 2.0, hi] {
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.3}</text>"#, MARGIN - 4.0, py(v) + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 8.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="14" y="{0}" text-anchor="middle" transform="rotate(-90 14 {0})">{1}</text>"#,
        HEIGHT / 2.0,
        escape(y_label)
    );
    out.push_str("</svg>\n");
    out
}
