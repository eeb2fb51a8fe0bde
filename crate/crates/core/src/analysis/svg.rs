//! Minimal deterministic SVG rendering: heatmaps, histograms, scatter plots.

use std::fmt::Write as _;

const FONT: &str = "font-family=\"sans-serif\" font-size=\"11\"";

/// Piecewise-linear viridis approximation on `t` in [0, 1].
fn color(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (STOPS.len() - 1) as f64;
    let i = (pos.floor() as usize).min(STOPS.len() - 2);
    let f = pos - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |x: f64, y: f64| (x + (y - x) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, w: f64, h: f64, title: &str) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"18\" text-anchor=\"middle\" {FONT} font-size=\"14\">{}</text>",
        w / 2.0,
        escape(title)
    );
}

/// Row-major `values` (`rows.len() x cols.len()`) as colored cells on
/// `[vmin, vmax]`, with each value printed when the grid is small.
pub fn heatmap(title: &str, rows: &[String], cols: &[String], values: &[f64], vmin: f64, vmax: f64) -> String {
    let cell = 28.0;
    let left = 12.0 + 7.0 * rows.iter().map(|r| r.len()).max().unwrap_or(1) as f64;
    let top = 40.0 + 6.5 * cols.iter().map(|c| c.len()).max().unwrap_or(1) as f64;
    let legend = 60.0;
    let w = left + cell * cols.len() as f64 + legend;
    let h = top + cell * rows.len() as f64 + 20.0;
    let mut out = String::new();
    header(&mut out, w, h, title);
    let span = if vmax > vmin { vmax - vmin } else { 1.0 };
    let annotate = rows.len() * cols.len() <= 400;
    for (i, r) in rows.iter().enumerate() {
        let y = top + cell * i as f64;
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" {FONT}>{}</text>",
            left - 4.0,
            y + cell * 0.65,
            escape(r)
        );
        for (j, _) in cols.iter().enumerate() {
            let v = values[i * cols.len() + j];
            let x = left + cell * j as f64;
            let t = (v - vmin) / span;
            let _ = writeln!(
                out,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell:.1}\" height=\"{cell:.1}\" fill=\"{}\"><title>{} / {}: {v:.4}</title></rect>",
                color(t),
                escape(r),
                escape(&cols[j])
            );
            if annotate {
                let ink = if t > 0.6 { "black" } else { "white" };
                let _ = writeln!(
                    out,
                    "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"8\" fill=\"{ink}\">{v:.2}</text>",
                    x + cell / 2.0,
                    y + cell * 0.6
                );
            }
        }
    }
    for (j, c) in cols.iter().enumerate() {
        let x = left + cell * j as f64 + cell * 0.6;
        let _ = writeln!(
            out,
            "<text x=\"{x:.1}\" y=\"{:.1}\" transform=\"rotate(-60 {x:.1} {:.1})\" {FONT}>{}</text>",
            top - 4.0,
            top - 4.0,
            escape(c)
        );
    }
    let lx = left + cell * cols.len() as f64 + 14.0;
    let lh = cell * rows.len() as f64;
    for s in 0..20 {
        let t = 1.0 - s as f64 / 19.0;
        let _ = writeln!(
            out,
            "<rect x=\"{lx:.1}\" y=\"{:.1}\" width=\"12\" height=\"{:.1}\" fill=\"{}\"/>",
            top + lh * s as f64 / 20.0,
            lh / 20.0 + 0.5,
            color(t)
        );
    }
    let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\" {FONT}>{vmax:.2}</text>", lx + 15.0, top + 9.0);
    let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\" {FONT}>{vmin:.2}</text>", lx + 15.0, top + lh);
    out.push_str("</svg>\n");
    out
}

/// Overlaid step histograms over a shared range.
pub fn histogram(title: &str, series: &[(String, Vec<f64>)], bins: usize, lo: f64, hi: f64, x_label: &str) -> String {
    let (w, h) = (520.0, 340.0);
    let (left, right, top, bottom) = (50.0, 130.0, 36.0, 44.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let width = (hi - lo) / bins as f64;
    let counts: Vec<Vec<f64>> = series
        .iter()
        .map(|(_, vals)| {
            let mut c = vec![0.0; bins];
            for &v in vals {
                if v.is_finite() {
                    let b = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
                    c[b] += 1.0;
                }
            }
            let total: f64 = c.iter().sum::<f64>().max(1.0);
            c.iter().map(|x| x / total).collect()
        })
        .collect();
    let ymax = counts.iter().flatten().copied().fold(0.0, f64::max).max(1e-12);
    let mut out = String::new();
    header(&mut out, w, h, title);
    let _ = writeln!(
        out,
        "<path d=\"M{left:.1},{top:.1} L{left:.1},{:.1} L{:.1},{:.1}\" stroke=\"black\" fill=\"none\"/>",
        top + ph,
        left + pw,
        top + ph
    );
    for (s, c) in counts.iter().enumerate() {
        let mut d = format!("M{left:.1},{:.1}", top + ph);
        for (b, v) in c.iter().enumerate() {
            let y = top + ph - ph * v / ymax;
            let x0 = left + pw * b as f64 / bins as f64;
            let x1 = left + pw * (b + 1) as f64 / bins as f64;
            let _ = write!(d, " L{x0:.1},{y:.1} L{x1:.1},{y:.1}");
        }
        let _ = write!(d, " L{:.1},{:.1}", left + pw, top + ph);
        let colour = PALETTE[s % PALETTE.len()];
        let _ = writeln!(out, "<path d=\"{d}\" stroke=\"{colour}\" fill=\"none\" stroke-width=\"1.2\"/>");
        let ly = top + 14.0 * s as f64 + 6.0;
        let _ = writeln!(
            out,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{colour}\"/><text x=\"{:.1}\" y=\"{:.1}\" {FONT}>{}</text>",
            left + pw + 10.0,
            ly,
            left + pw + 24.0,
            ly + 9.0,
            escape(&series[s].0)
        );
    }
    for t in 0..=4 {
        let v = lo + (hi - lo) * t as f64 / 4.0;
        let x = left + pw * t as f64 / 4.0;
        let _ = writeln!(
            out,
            "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\" {FONT}>{v:.2}</text>",
            top + ph + 14.0
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" {FONT}>{}</text>",
        left + pw / 2.0,
        h - 8.0,
        escape(x_label)
    );
    out.push_str("</svg>\n");
    out
}

/// Points grouped by series label.
pub fn scatter(title: &str, points: &[(String, f64, f64)], x_label: &str, y_label: &str) -> String {
    let (w, h) = (520.0, 360.0);
    let (left, right, top, bottom) = (60.0, 120.0, 36.0, 48.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let finite = |f: fn(&(String, f64, f64)) -> f64| points.iter().map(f).filter(|v| v.is_finite());
    let (mut x0, mut x1) = (finite(|p| p.1).fold(f64::INFINITY, f64::min), finite(|p| p.1).fold(f64::NEG_INFINITY, f64::max));
    let (mut y0, mut y1) = (finite(|p| p.2).fold(f64::INFINITY, f64::min), finite(|p| p.2).fold(f64::NEG_INFINITY, f64::max));
    if !(x0 < x1) {
        x0 = if x0.is_finite() { x0 - 1.0 } else { 0.0 };
        x1 = x0 + 2.0;
    }
    if !(y0 < y1) {
        y0 = if y0.is_finite() { y0 - 1.0 } else { 0.0 };
        y1 = y0 + 2.0;
    }
    let (xp, yp) = ((x1 - x0) * 0.05, (y1 - y0) * 0.05);
    let (x0, x1, y0, y1) = (x0 - xp, x1 + xp, y0 - yp, y1 + yp);
    let mut groups: Vec<&str> = Vec::new();
    for p in points {
        if !groups.contains(&p.0.as_str()) {
            groups.push(&p.0);
        }
    }
    let mut out = String::new();
    header(&mut out, w, h, title);
    let _ = writeln!(
        out,
        "<path d=\"M{left:.1},{top:.1} L{left:.1},{:.1} L{:.1},{:.1}\" stroke=\"black\" fill=\"none\"/>",
        top + ph,
        left + pw,
        top + ph
    );
    for p in points {
        let g = groups.iter().position(|&g| g == p.0).unwrap_or(0);
        let cx = left + pw * (p.1 - x0) / (x1 - x0);
        let cy = top + ph - ph * (p.2 - y0) / (y1 - y0);
        let _ = writeln!(
            out,
            "<circle cx=\"{cx:.1}\" cy=\"{cy:.1}\" r=\"4\" fill=\"{}\" fill-opacity=\"0.8\"/>",
            PALETTE[g % PALETTE.len()]
        );
    }
    for (g, name) in groups.iter().enumerate() {
        let ly = top + 14.0 * g as f64 + 6.0;
        let _ = writeln!(
            out,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"{}\"/><text x=\"{:.1}\" y=\"{:.1}\" {FONT}>{}</text>",
            left + pw + 16.0,
            ly + 4.0,
            PALETTE[g % PALETTE.len()],
            left + pw + 26.0,
            ly + 8.0,
            escape(name)
        );
    }
    for t in 0..=4 {
        let xv = x0 + (x1 - x0) * t as f64 / 4.0;
        let yv = y0 + (y1 - y0) * t as f64 / 4.0;
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" {FONT}>{xv:.3}</text>",
            left + pw * t as f64 / 4.0,
            top + ph + 14.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" {FONT}>{yv:.3}</text>",
            left - 4.0,
            top + ph - ph * t as f64 / 4.0 + 4.0
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" {FONT}>{}</text>",
        left + pw / 2.0,
        h - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{:.1}\" transform=\"rotate(-90 14 {:.1})\" text-anchor=\"middle\" {FONT}>{}</text>",
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    out.push_str("</svg>\n");
    out
}
