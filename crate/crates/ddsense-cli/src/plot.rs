//! Minimal SVG line charts for sweep results: one chart per metric,
//! log-scale y for MSE series. Pure string generation, no drawing deps.

use anyhow::{bail, Result};
use std::fmt::Write as _;
use std::path::Path;

use crate::config::SweepVariable;
use crate::sweep::SweepResult;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

fn nice_ticks(min: f64, max: f64, count: usize) -> Vec<f64> {
    if !(max > min) {
        return vec![min];
    }
    let span = max - min;
    let raw = span / count as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * mag);
    let start = (min / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut t = start;
    while t <= max + 1e-9 * span {
        ticks.push(t);
        t += step;
    }
    ticks
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-3) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Render one chart. `log_y` plots log10 of the values; all y values must
/// then be positive.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], log_y: bool) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        bail!("no data to plot");
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if log_y && y <= 0.0 {
                bail!("log-scale chart requires positive values, got {y}");
            }
            xs.push(x);
            ys.push(if log_y { y.log10() } else { y });
        }
    }
    let (x_min, x_max) = xs.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let (mut y_min, mut y_max) =
        ys.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    if y_max - y_min < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };

    let px = |x: f64| MARGIN_L + (x - x_min) / x_span * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - (y - y_min) / (y_max - y_min) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )?;
    write!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#)?;
    write!(
        svg,
        r#"<text x="{}" y="22" font-size="15" text-anchor="middle" font-family="sans-serif">{title}</text>"#,
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0
    )?;

    // Axes.
    write!(
        svg,
        r#"<line x1="{l}" y1="{t}" x2="{l}" y2="{b}" stroke="black"/><line x1="{l}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        l = MARGIN_L,
        r = WIDTH - MARGIN_R,
        t = MARGIN_T,
        b = HEIGHT - MARGIN_B
    )?;
    for t in nice_ticks(x_min, x_max, 6) {
        let x = px(t);
        write!(
            svg,
            r#"<line x1="{x}" y1="{b}" x2="{x}" y2="{b2}" stroke="black"/><text x="{x}" y="{ty}" font-size="11" text-anchor="middle" font-family="sans-serif">{}</text>"#,
            fmt_tick(t),
            b = HEIGHT - MARGIN_B,
            b2 = HEIGHT - MARGIN_B + 5.0,
            ty = HEIGHT - MARGIN_B + 18.0
        )?;
    }
    for t in nice_ticks(y_min, y_max, 6) {
        let y = py(t);
        let label = if log_y {
            format!("1e{}", fmt_tick(t))
        } else {
            fmt_tick(t)
        };
        write!(
            svg,
            r#"<line x1="{l2}" y1="{y}" x2="{l}" y2="{y}" stroke="black"/><text x="{tx}" y="{ty}" font-size="11" text-anchor="end" font-family="sans-serif">{label}</text>"#,
            l = MARGIN_L,
            l2 = MARGIN_L - 5.0,
            tx = MARGIN_L - 8.0,
            ty = y + 4.0
        )?;
    }
    write!(
        svg,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle" font-family="sans-serif">{x_label}</text>"#,
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 10.0
    )?;
    write!(
        svg,
        r#"<text x="16" y="{}" font-size="12" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 16 {})">{y_label}</text>"#,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0
    )?;

    // Series: polyline plus circular markers (a single point still shows).
    for (si, s) in series.iter().enumerate() {
        let color = COLORS[si % COLORS.len()];
        if s.points.len() > 1 {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(if log_y { y.log10() } else { y })))
                .collect();
            write!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
                pts.join(" ")
            )?;
        }
        for &(x, y) in &s.points {
            write!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                px(x),
                py(if log_y { y.log10() } else { y })
            )?;
        }
        let ly = MARGIN_T + 16.0 * si as f64 + 10.0;
        write!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{lx2}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{tx}" y="{ty}" font-size="11" font-family="sans-serif">{}</text>"#,
            s.name,
            lx = WIDTH - MARGIN_R + 10.0,
            lx2 = WIDTH - MARGIN_R + 30.0,
            tx = WIDTH - MARGIN_R + 35.0,
            ty = ly + 4.0
        )?;
    }
    write!(svg, "</svg>")?;
    Ok(svg)
}

/// Write the standard chart set for a sweep result: position RMSE, velocity
/// RMSE, and tap MSE (log y). Returns the files written.
pub fn emit_plots(result: &SweepResult, out_dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    if result.points.is_empty() {
        bail!("sweep result has no points to plot");
    }
    let x_label = match result.variable {
        SweepVariable::TxPowerDbm => "transmit power (dBm)",
        SweepVariable::CosTheta => "cos(theta)",
    };
    let xy = |f: fn(&crate::sweep::SweepPoint) -> f64| -> Vec<(f64, f64)> {
        result.points.iter().map(|p| (p.value, f(p))).collect()
    };

    let charts: [(&str, &str, bool, Vec<Series>); 3] = [
        (
            "position_rmse.svg",
            "position RMSE (m)",
            false,
            vec![
                Series { name: "double WLS", points: xy(|p| p.rmse_pos_wls) },
                Series { name: "LM", points: xy(|p| p.rmse_pos_lm) },
                Series { name: "DFP", points: xy(|p| p.rmse_pos_dfp) },
            ],
        ),
        (
            "velocity_rmse.svg",
            "velocity RMSE (m/s)",
            false,
            vec![
                Series { name: "double WLS", points: xy(|p| p.rmse_vel_wls) },
                Series { name: "LM", points: xy(|p| p.rmse_vel_lm) },
                Series { name: "DFP", points: xy(|p| p.rmse_vel_dfp) },
            ],
        ),
        (
            "tap_mse.svg",
            "tap MSE (taps^2)",
            true,
            vec![
                Series { name: "delay LoS", points: xy(|p| p.mse_delay_los) },
                Series { name: "delay NLoS", points: xy(|p| p.mse_delay_nlos) },
                Series { name: "Doppler LoS", points: xy(|p| p.mse_doppler_los) },
                Series { name: "Doppler NLoS", points: xy(|p| p.mse_doppler_nlos) },
            ],
        ),
    ];

    let mut written = Vec::new();
    for (file, y_label, log_y, series) in charts {
        let svg = line_chart(y_label, x_label, y_label, &series, log_y)?;
        let path = out_dir.join(file);
        std::fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}
