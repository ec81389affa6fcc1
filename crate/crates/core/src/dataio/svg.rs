use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

use super::csv::check_series;
use super::write_atomic;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_Y: f64 = 40.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Standalone SVG line chart of equal-length series against their index.
pub fn render_svg_lineplot(title: &str, series: &[(String, Vec<f64>)]) -> Result<String> {
    let len = check_series(series)?;
    let finite = series.iter().flat_map(|s| s.1.iter()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        lo -= 0.5;
        hi += 0.5;
    }
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - 2.0 * MARGIN_Y;
    let x_of = |i: usize| {
        MARGIN_LEFT + if len > 1 { plot_w * i as f64 / (len - 1) as f64 } else { plot_w / 2.0 }
    };
    let y_of = |v: f64| MARGIN_Y + plot_h * (hi - v) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<g stroke="black" stroke-width="1"><line x1="{l:.1}" y1="{t:.1}" x2="{l:.1}" y2="{b:.1}"/><line x1="{l:.1}" y1="{b:.1}" x2="{r:.1}" y2="{b:.1}"/></g>"#,
        l = MARGIN_LEFT,
        t = MARGIN_Y,
        b = MARGIN_Y + plot_h,
        r = MARGIN_LEFT + plot_w
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{:.4e}</text>"#,
            MARGIN_LEFT - 6.0,
            y_of(v) + 3.0,
            v
        );
    }
    for i in [0, len - 1] {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
            x_of(i),
            MARGIN_Y + plot_h + 14.0,
            i
        );
    }
    for (n, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[n % PALETTE.len()];
        let pts: Vec<String> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| format!("{:.2},{:.2}", x_of(i), y_of(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = MARGIN_Y + 10.0 + 18.0 * n as f64;
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_svg_lineplot(path: &Path, title: &str, series: &[(String, Vec<f64>)]) -> Result<()> {
    let svg = render_svg_lineplot(title, series)?;
    write_atomic(path, svg.as_bytes())
}
