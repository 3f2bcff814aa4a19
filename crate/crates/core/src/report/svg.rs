//! Minimal static SVG charts: boxplots, heatmaps and scatter plots.

use std::fmt::Write;

use crate::explain::ranks::quantile;

const FONT: &str = "font-family=\"sans-serif\" font-size=\"11\"";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(w: f64, h: f64, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"18\" text-anchor=\"middle\" {FONT} font-size=\"14\">{}</text>",
        w / 2.0,
        escape(title)
    );
    s
}

/// Horizontal boxplots, one per labelled sample, top to bottom in the given
/// order. Whiskers span min to max.
pub fn boxplot(title: &str, x_label: &str, rows: &[(String, Vec<f64>)]) -> String {
    let label_w = 190.0;
    let plot_w = 420.0;
    let row_h = 18.0;
    let top = 32.0;
    let h = top + row_h * rows.len() as f64 + 40.0;
    let w = label_w + plot_w + 20.0;
    let all: Vec<f64> = rows.iter().flat_map(|(_, v)| v.iter().copied()).filter(|v| v.is_finite()).collect();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(lo + 1.0);
    let x = |v: f64| label_w + (v - lo) / (hi - lo) * plot_w;
    let mut s = open(w, h, title);
    for (i, (label, values)) in rows.iter().enumerate() {
        let cy = top + row_h * (i as f64 + 0.5);
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" {FONT}>{}</text>",
            label_w - 6.0,
            cy + 4.0,
            escape(label)
        );
        let mut v: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        if v.is_empty() {
            continue;
        }
        v.sort_by(f64::total_cmp);
        let (q1, med, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let (mn, mx) = (v[0], v[v.len() - 1]);
        let _ = writeln!(
            s,
            "<line x1=\"{:.1}\" x2=\"{:.1}\" y1=\"{cy:.1}\" y2=\"{cy:.1}\" stroke=\"#555\"/>",
            x(mn),
            x(mx)
        );
        let _ = writeln!(
            s,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#9ecae1\" stroke=\"#3182bd\"/>",
            x(q1),
            cy - row_h * 0.35,
            (x(q3) - x(q1)).max(1.0),
            row_h * 0.7
        );
        let _ = writeln!(
            s,
            "<line x1=\"{0:.1}\" x2=\"{0:.1}\" y1=\"{1:.1}\" y2=\"{2:.1}\" stroke=\"#08306b\" stroke-width=\"2\"/>",
            x(med),
            cy - row_h * 0.35,
            cy + row_h * 0.35
        );
    }
    let axis_y = top + row_h * rows.len() as f64 + 4.0;
    let _ = writeln!(
        s,
        "<line x1=\"{label_w:.1}\" x2=\"{:.1}\" y1=\"{axis_y:.1}\" y2=\"{axis_y:.1}\" stroke=\"black\"/>",
        label_w + plot_w
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" {FONT}>{v:.1}</text>",
            x(v),
            axis_y + 14.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" {FONT}>{}</text>",
        label_w + plot_w / 2.0,
        axis_y + 30.0,
        escape(x_label)
    );
    s.push_str("</svg>\n");
    s
}

/// `cells[row][col]` shaded from white (0) to red (row-independent max).
pub fn heatmap(title: &str, row_labels: &[String], col_labels: &[String], cells: &[Vec<f64>]) -> String {
    let cell = 26.0;
    let left = 60.0;
    let top = 40.0;
    let w = left + cell * col_labels.len() as f64 + 20.0;
    let h = top + cell * row_labels.len() as f64 + 90.0;
    let max = cells.iter().flatten().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let mut s = open(w.max(240.0), h, title);
    for (r, label) in row_labels.iter().enumerate() {
        let y = top + cell * r as f64;
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" {FONT}>{}</text>",
            left - 6.0,
            y + cell * 0.65,
            escape(label)
        );
        for (c, &v) in cells[r].iter().enumerate() {
            let t = if max > 0.0 { (v / max).clamp(0.0, 1.0) } else { 0.0 };
            let g = (255.0 * (1.0 - t)).round() as u8;
            let _ = writeln!(
                s,
                "<rect x=\"{:.1}\" y=\"{y:.1}\" width=\"{cell:.1}\" height=\"{cell:.1}\" fill=\"rgb(255,{g},{g})\" stroke=\"#ddd\"><title>{v:.6}</title></rect>",
                left + cell * c as f64
            );
        }
    }
    let base = top + cell * row_labels.len() as f64 + 8.0;
    for (c, label) in col_labels.iter().enumerate() {
        let x = left + cell * (c as f64 + 0.5);
        let _ = writeln!(
            s,
            "<text transform=\"translate({x:.1},{base:.1}) rotate(60)\" {FONT}>{}</text>",
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Two-class scatter plot; `true` points are drawn red on top.
pub fn scatter(title: &str, points: &[([f64; 2], bool)]) -> String {
    let size = 420.0;
    let pad = 30.0;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (p, _) in points {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let sx = (x1 - x0).max(1e-9);
    let sy = (y1 - y0).max(1e-9);
    let mut s = open(size + 2.0 * pad, size + 2.0 * pad, title);
    for flag in [false, true] {
        let fill = if flag { "#d7301f" } else { "#3182bd" };
        for (p, _) in points.iter().filter(|(_, l)| *l == flag) {
            let _ = writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{fill}\" fill-opacity=\"0.7\"/>",
                pad + (p[0] - x0) / sx * size,
                pad + (y1 - p[1]) / sy * size
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
