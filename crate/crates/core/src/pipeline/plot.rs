//! Minimal static SVG charts.

use std::fmt::Write;

use crate::eval::EviSummary;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 40.0;

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{y}" x2="{x}" y2="{y}" stroke="black"/><line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{y}" stroke="black"/>"#,
        y = HEIGHT - MARGIN,
        x = WIDTH - MARGIN
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Histogram of EVI values with the median marked by a dotted line.
pub fn evi_histogram_svg(summary: &EviSummary, title: &str) -> String {
    let mut s = header(title);
    let mut counts = summary.bins.clone();
    counts.push(summary.overflow);
    let max = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let bar_w = plot_w / counts.len() as f64;
    for (i, &c) in counts.iter().enumerate() {
        let h = plot_h * c as f64 / max;
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#7a9cc6" stroke="white"/>"##,
            MARGIN + i as f64 * bar_w,
            HEIGHT - MARGIN - h,
            bar_w,
            h
        );
    }
    let span = summary.bin_width * (counts.len() as f64);
    let mx = MARGIN + plot_w * (summary.median.clamp(0.0, span) / span);
    let _ = writeln!(
        s,
        r#"<line x1="{mx:.2}" y1="{MARGIN}" x2="{mx:.2}" y2="{:.2}" stroke="black" stroke-width="3" stroke-dasharray="2,4"/>"#,
        HEIGHT - MARGIN
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let x = MARGIN + plot_w * tick / span;
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="middle">{tick}</text>"#,
            HEIGHT - MARGIN + 14.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Line chart of several series over a shared index; first series is drawn as points.
pub fn series_svg(title: &str, series: &[(&str, &[f64])]) -> String {
    let mut s = header(title);
    let len = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let (lo, hi) = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if len < 2 || !lo.is_finite() {
        s.push_str("</svg>\n");
        return s;
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let px = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (len - 1) as f64;
    let py = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / span;
    let colours = ["#555555", "#d95f02", "#1b9e77", "#7570b3", "#e7298a", "#66a61e"];
    for (si, (name, values)) in series.iter().enumerate() {
        let colour = colours[si % colours.len()];
        if si == 0 {
            for (i, &v) in values.iter().enumerate() {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="1.2" fill="{colour}"/>"#, px(i), py(v));
            }
        } else {
            let pts: Vec<String> = values
                .iter()
                .enumerate()
                .map(|(i, &v)| format!("{:.2},{:.2}", px(i), py(v)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="1" points="{}"/>"#,
                pts.join(" ")
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" fill="{colour}">{}</text>"#,
            WIDTH - MARGIN - 150.0,
            MARGIN + 12.0 * (si as f64 + 1.0),
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::evi_summary;

    #[test]
    fn histogram_is_well_formed() {
        let svg = evi_histogram_svg(&evi_summary(&[0.1, 0.2, 0.2, 1.3]).unwrap(), "EVI <test>");
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 1 + 21);
        assert!(svg.contains("EVI &lt;test&gt;"));
    }

    #[test]
    fn series_chart() {
        let obs = [1.0, 2.0, 3.0];
        let q = [2.0, 3.0, 4.0];
        let svg = series_svg("t", &[("obs", &obs), ("q", &q)]);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert_eq!(svg.matches("<polyline").count(), 1);
    }
}
