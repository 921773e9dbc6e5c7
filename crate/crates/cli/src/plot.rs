//! SVG line charts from training logs: per metric, the cross-seed mean with
//! a shaded band of a configurable multiple of the standard deviation
//! (default half), plus a plot-data CSV carrying the drawn numbers.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};
use crate::harness::{aggregate_rows, read_metrics_csv, MetricsRecord, METRIC_COLUMNS};

pub const DEFAULT_BAND: f64 = 0.5;
pub const DEFAULT_METRICS: [&str; 2] = ["mean_return", "oscillation_ratio"];

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 34.0;
const MARGIN_BOTTOM: f64 = 54.0;

/// Finds the per-seed CSVs a training run left in `dir`.
pub fn discover_seed_csvs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("seed_") && n.ends_with(".csv"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::bad_arg(format!(
            "no seed_*.csv files under {}",
            dir.display()
        )));
    }
    Ok(paths)
}

/// One drawn point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPoint {
    pub env_step: u64,
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

/// Mean and band values for one metric across seed logs, finite points only.
pub fn band_series(
    per_seed: &[Vec<MetricsRecord>],
    metric: &str,
    band: f64,
) -> Result<Vec<BandPoint>> {
    let col = METRIC_COLUMNS
        .iter()
        .position(|c| *c == metric)
        .ok_or_else(|| {
            CliError::bad_arg(format!(
                "unknown metric {metric:?}; known metrics: {}",
                METRIC_COLUMNS.join(", ")
            ))
        })?;
    let points: Vec<BandPoint> = aggregate_rows(per_seed)
        .into_iter()
        .filter_map(|row| {
            let (mean, std) = (row.mean[col], row.std[col]);
            mean.is_finite().then(|| BandPoint {
                env_step: row.env_step,
                mean,
                low: mean - band * std,
                high: mean + band * std,
            })
        })
        .collect();
    if points.is_empty() {
        return Err(CliError::bad_arg(format!(
            "metric {metric:?} has no finite values to plot"
        )));
    }
    Ok(points)
}

fn fmt_tick(v: f64) -> String {
    let abs = v.abs();
    if v == 0.0 {
        "0".to_string()
    } else if abs >= 10_000.0 || abs < 0.01 {
        format!("{v:.2e}")
    } else {
        let text = format!("{v:.3}");
        text.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Renders one metric chart. Pure string assembly; the drawing area maps
/// env steps to x and the padded value range to y.
pub fn render_svg(metric: &str, points: &[BandPoint], band: f64) -> String {
    let x_min = points.first().map_or(0.0, |p| p.env_step as f64);
    let x_max = points.last().map_or(1.0, |p| p.env_step as f64);
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for p in points {
        y_min = y_min.min(p.low);
        y_max = y_max.max(p.high);
    }
    let pad = if y_max > y_min {
        0.05 * (y_max - y_min)
    } else {
        0.5 * y_min.abs().max(1.0)
    };
    let (y_min, y_max) = (y_min - pad, y_max + pad);
    let y_span = y_max - y_min;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |step: u64| MARGIN_LEFT + (step as f64 - x_min) / x_span * plot_w;
    let y_of = |v: f64| MARGIN_TOP + (y_max - v) / y_span * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{metric} (band {band} std)</text>\n",
        WIDTH / 2.0
    ));

    // gridlines and ticks
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let y_val = y_min + frac * y_span;
        let y = y_of(y_val);
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_LEFT}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            WIDTH - MARGIN_RIGHT
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"end\">{}</text>\n",
            MARGIN_LEFT - 8.0,
            y + 4.0,
            fmt_tick(y_val)
        ));
        let x_val = x_min + frac * x_span;
        let x = MARGIN_LEFT + frac * plot_w;
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{}</text>\n",
            HEIGHT - MARGIN_BOTTOM + 20.0,
            fmt_tick(x_val)
        ));
    }

    // band polygon: highs forward, lows backward
    if points.len() > 1 {
        let mut polygon = String::from("<polygon points=\"");
        for p in points {
            polygon.push_str(&format!("{:.2},{:.2} ", x_of(p.env_step), y_of(p.high)));
        }
        for p in points.iter().rev() {
            polygon.push_str(&format!("{:.2},{:.2} ", x_of(p.env_step), y_of(p.low)));
        }
        polygon.push_str("\" fill=\"#4477aa\" fill-opacity=\"0.25\" stroke=\"none\"/>\n");
        svg.push_str(&polygon);
    }

    // mean line
    let mut line = String::from("<polyline points=\"");
    for p in points {
        line.push_str(&format!("{:.2},{:.2} ", x_of(p.env_step), y_of(p.mean)));
    }
    line.push_str("\" fill=\"none\" stroke=\"#4477aa\" stroke-width=\"2\"/>\n");
    svg.push_str(&line);

    // axes
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_LEFT}\" y1=\"{MARGIN_TOP}\" x2=\"{MARGIN_LEFT}\" y2=\"{:.2}\" \
         stroke=\"black\" stroke-width=\"1\"/>\n",
        HEIGHT - MARGIN_BOTTOM
    ));
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_LEFT}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" \
         stroke=\"black\" stroke-width=\"1\"/>\n",
        HEIGHT - MARGIN_BOTTOM,
        WIDTH - MARGIN_RIGHT,
        HEIGHT - MARGIN_BOTTOM
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">env_step</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    ));
    svg.push_str("</svg>\n");
    svg
}

/// Emits one SVG chart and one plot-data CSV per requested metric; returns
/// the written file paths.
pub fn emit_plots(
    log_dir: &Path,
    metrics: &[String],
    band: f64,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if !band.is_finite() || band < 0.0 {
        return Err(CliError::bad_arg("band must be a nonnegative number"));
    }
    let seed_paths = discover_seed_csvs(log_dir)?;
    let per_seed: Vec<Vec<MetricsRecord>> = seed_paths
        .iter()
        .map(|p| read_metrics_csv(p))
        .collect::<Result<_>>()?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut written = Vec::new();
    for metric in metrics {
        let points = band_series(&per_seed, metric, band)?;
        let svg_path = out_dir.join(format!("{metric}.svg"));
        fs::write(&svg_path, render_svg(metric, &points, band))
            .map_err(|e| CliError::io(&svg_path, e))?;
        let data_path = out_dir.join(format!("{metric}.plot.csv"));
        let mut data = String::from("env_step,mean,band_low,band_high\n");
        for p in &points {
            data.push_str(&format!("{},{},{},{}\n", p.env_step, p.mean, p.low, p.high));
        }
        fs::write(&data_path, data).map_err(|e| CliError::io(&data_path, e))?;
        written.push(svg_path);
        written.push(data_path);
    }
    Ok(written)
}
