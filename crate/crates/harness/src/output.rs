//! CSV and SVG emission.

use std::fmt::Write as _;
use std::io::Write;

use crate::experiment::MetricRow;

pub const METRIC_HEADER: [&str; 10] = [
    "variable",
    "value",
    "estimator",
    "trials",
    "failed",
    "rmse_position_m",
    "nmse_rotation",
    "sq_error_std_err",
    "bound_position_m",
    "bound_attitude_rad",
];

/// Seventeen significant digits, so values survive a text round trip.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

pub fn write_metrics<W: Write>(rows: &[MetricRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRIC_HEADER)?;
    for r in rows {
        w.write_record([
            r.variable.to_string(),
            float(r.value),
            r.estimator.to_string(),
            r.trials.to_string(),
            r.failed.to_string(),
            opt(r.rmse_position),
            opt(r.nmse_rotation),
            opt(r.sq_error_std_err),
            opt(r.bound_position),
            opt(r.bound_attitude),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table<W: Write>(header: &[&str], rows: &[Vec<String>], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Position RMSE per estimator against the sweep value, log-scaled, with the bound dashed.
pub fn metrics_svg(rows: &[MetricRow]) -> String {
    let (w, h, pad) = (640.0, 420.0, 60.0);
    let mut series: Vec<(String, Vec<(f64, f64)>, bool)> = Vec::new();
    let mut push = |name: &str, x: f64, y: Option<f64>, dashed: bool| {
        let Some(y) = y.filter(|y| *y > 0.0 && y.is_finite()) else {
            return;
        };
        match series.iter_mut().find(|s| s.0 == name) {
            Some(s) => s.1.push((x, y)),
            None => series.push((name.to_string(), vec![(x, y)], dashed)),
        }
    };
    for r in rows {
        push(r.estimator, r.value, r.rmse_position, false);
    }
    // one bound per sweep value
    let mut seen: Vec<f64> = Vec::new();
    for r in rows {
        if seen.contains(&r.value) {
            continue;
        }
        seen.push(r.value);
        push("bound", r.value, r.bound_position, true);
    }
    let finite_x: Vec<f64> = rows.iter().map(|r| r.value).filter(|v| v.is_finite()).collect();
    let points: Vec<(f64, f64)> = series.iter().flat_map(|s| s.1.iter().copied()).collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    if points.is_empty() || finite_x.is_empty() {
        let _ = writeln!(svg, r#"<text x="{pad}" y="{pad}">no data</text></svg>"#);
        return svg;
    }
    let (x0, x1) = finite_x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| (a.0.min(v), a.1.max(v)));
    let (x0, x1) = if x1 > x0 { (x0, x1) } else { (x0 - 1.0, x1 + 1.0) };
    let ly: Vec<f64> = points.iter().map(|p| p.1.log10()).collect();
    let y0 = ly.iter().copied().fold(f64::INFINITY, f64::min).floor();
    let y1 = ly.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil().max(y0 + 1.0);
    let sx = |x: f64| {
        let x = if x.is_finite() { x } else { x1 };
        pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad)
    };
    let sy = |y: f64| h - pad - (y.log10() - y0) / (y1 - y0) * (h - 2.0 * pad);
    let _ = writeln!(
        svg,
        r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    for d in (y0 as i32)..=(y1 as i32) {
        let y = sy(10f64.powi(d));
        let _ = writeln!(
            svg,
            r##"<line x1="{pad}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">1e{d}</text>"##,
            w - pad,
            pad - 6.0,
            y + 4.0
        );
    }
    let mut ticks: Vec<f64> = finite_x.clone();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for x in ticks {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x}</text>"#,
            sx(x),
            h - pad + 18.0
        );
    }
    if let Some(r) = rows.first() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text><text x="16" y="{:.1}" transform="rotate(-90 16 {:.1})" text-anchor="middle">position RMSE (m)</text>"#,
            w / 2.0,
            h - 16.0,
            r.variable,
            h / 2.0,
            h / 2.0
        );
    }
    for (i, (name, pts, dashed)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let dash = if *dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
            path.join(" ")
        );
        for &(x, y) in pts {
            let _ = writeln!(svg, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = pad + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{name}</text>"#,
            w - pad - 110.0,
            w - pad - 80.0,
            w - pad - 74.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}
