//! Native SVG line charts of L1-accuracy traces.
//!
//! Output depends only on the input rows, and coordinates are printed with
//! fixed precision.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};

use crate::accuracy::expand_inputs;
use crate::artifacts::{read_accuracy, AccuracyRow, OutDir};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
/// Values at or below this are drawn on the floor of a log axis.
pub const LOG_FLOOR: f64 = 1e-16;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YScale {
    Linear,
    Log,
}

/// One run's curve.
#[derive(Debug, Clone)]
pub struct Series {
    pub algorithm: String,
    pub run_id: usize,
    pub points: Vec<(f64, f64)>,
}

pub fn series_from_rows(rows: &[AccuracyRow]) -> Vec<Series> {
    let mut map: BTreeMap<(String, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        map.entry((r.algorithm.clone(), r.run_id))
            .or_default()
            .push((r.iteration as f64, r.l1_accuracy));
    }
    map.into_iter()
        .map(|((algorithm, run_id), mut points)| {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { algorithm, run_id, points }
        })
        .collect()
}

struct Frame {
    x_max: f64,
    y_lo: f64,
    y_hi: f64,
    scale: YScale,
}

impl Frame {
    fn new(all: impl Iterator<Item = (f64, f64)>, scale: YScale) -> Self {
        let (mut x_max, mut y_lo, mut y_hi) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in all {
            x_max = x_max.max(x);
            let y = match scale {
                YScale::Log => y.max(LOG_FLOOR).log10(),
                YScale::Linear => y,
            };
            y_lo = y_lo.min(y);
            y_hi = y_hi.max(y);
        }
        match scale {
            YScale::Log => {
                y_lo = y_lo.floor();
                y_hi = y_hi.ceil();
            }
            YScale::Linear => y_lo = y_lo.min(0.0),
        }
        if y_hi <= y_lo {
            y_hi = y_lo + 1.0;
        }
        Self {
            x_max: x_max.max(1.0),
            y_lo,
            y_hi,
            scale,
        }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + x / self.x_max * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let y = match self.scale {
            YScale::Log => y.max(LOG_FLOOR).log10(),
            YScale::Linear => y,
        };
        TOP + (self.y_hi - y) / (self.y_hi - self.y_lo) * (HEIGHT - TOP - BOTTOM)
    }

    fn axes(&self, svg: &mut String, title: &str) {
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="18" text-anchor="middle" font-size="14">{title}</text>"#, (x0 + x1) / 2.0);
        let _ = writeln!(svg, r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
        for k in 0..=4 {
            let x = self.x_max * k as f64 / 4.0;
            let px = self.px(x);
            let _ = writeln!(svg, r#"<line x1="{px:.2}" y1="{y1:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, y1 + 5.0);
            let _ = writeln!(svg, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"#, y1 + 18.0, x.round());
        }
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">iteration</text>"#, (x0 + x1) / 2.0, HEIGHT - 10.0);
        let ticks: Vec<(f64, String)> = match self.scale {
            YScale::Log => {
                let step = ((self.y_hi - self.y_lo) / 8.0).ceil().max(1.0);
                let mut v = Vec::new();
                let mut e = self.y_lo;
                while e <= self.y_hi + 1e-9 {
                    v.push((10f64.powf(e), format!("1e{}", e as i64)));
                    e += step;
                }
                v
            }
            YScale::Linear => (0..=4)
                .map(|k| {
                    let y = self.y_lo + (self.y_hi - self.y_lo) * k as f64 / 4.0;
                    (y, format!("{y:.3}"))
                })
                .collect(),
        };
        for (y, label) in ticks {
            let py = self.py(y);
            let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0:.2}" y2="{py:.2}" stroke="black"/>"#, x0 - 5.0);
            let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{label}</text>"#, x0 - 8.0, py + 4.0);
        }
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {:.2})">L1 accuracy</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0
        );
    }

    fn legend(&self, svg: &mut String, algorithms: &[String]) {
        for (k, alg) in algorithms.iter().enumerate() {
            let y = TOP + 10.0 + 20.0 * k as f64;
            let x = WIDTH - RIGHT + 15.0;
            let c = PALETTE[k % PALETTE.len()];
            let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{c}" stroke-width="2"/>"#, x + 25.0);
            let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" font-size="12">{}</text>"#, x + 32.0, y + 4.0, alg.to_uppercase());
        }
    }
}

fn header() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn algorithms_of(series: &[Series]) -> Vec<String> {
    let mut v: Vec<String> = series.iter().map(|s| s.algorithm.clone()).collect();
    v.dedup();
    v.sort();
    v.dedup();
    v
}

/// One polyline per run, coloured by algorithm.
pub fn render_runs(series: &[Series], scale: YScale, title: &str) -> String {
    let frame = Frame::new(series.iter().flat_map(|s| s.points.iter().copied()), scale);
    let algorithms = algorithms_of(series);
    let mut svg = header();
    frame.axes(&mut svg, title);
    for s in series {
        let k = algorithms.iter().position(|a| *a == s.algorithm).unwrap_or(0);
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline data-run="{}" fill="none" stroke="{}" stroke-width="1.2" stroke-opacity="0.8" points="{}"/>"#,
            s.run_id,
            PALETTE[k % PALETTE.len()],
            pts.join(" ")
        );
    }
    frame.legend(&mut svg, &algorithms);
    svg.push_str("</svg>\n");
    svg
}

/// Mean and standard deviation per iteration over the runs of one algorithm.
/// A run that has ended holds its last value.
pub fn mean_band(series: &[&Series]) -> Vec<(f64, f64, f64)> {
    let mut xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs.iter()
        .map(|&x| {
            let vals: Vec<f64> = series
                .iter()
                .filter_map(|s| {
                    let i = s.points.partition_point(|p| p.0 <= x);
                    (i > 0).then(|| s.points[i - 1].1)
                })
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (x, mean, var.sqrt())
        })
        .collect()
}

/// Mean curve per algorithm with a shaded mean +/- one standard deviation band.
pub fn render_band(series: &[Series], scale: YScale, title: &str) -> String {
    let algorithms = algorithms_of(series);
    let bands: Vec<Vec<(f64, f64, f64)>> = algorithms
        .iter()
        .map(|a| mean_band(&series.iter().filter(|s| &s.algorithm == a).collect::<Vec<_>>()))
        .collect();
    let frame = Frame::new(
        bands.iter().flatten().flat_map(|&(x, m, sd)| [(x, (m - sd).max(0.0)), (x, m + sd)]),
        scale,
    );
    let mut svg = header();
    frame.axes(&mut svg, title);
    for (k, band) in bands.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        let upper: Vec<String> = band.iter().map(|&(x, m, sd)| format!("{:.2},{:.2}", frame.px(x), frame.py(m + sd))).collect();
        let lower: Vec<String> = band
            .iter()
            .rev()
            .map(|&(x, m, sd)| format!("{:.2},{:.2}", frame.px(x), frame.py((m - sd).max(0.0))))
            .collect();
        let _ = writeln!(svg, r#"<polygon fill="{c}" fill-opacity="0.2" stroke="none" points="{} {}"/>"#, upper.join(" "), lower.join(" "));
        let mean: Vec<String> = band.iter().map(|&(x, m, _)| format!("{:.2},{:.2}", frame.px(x), frame.py(m))).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#, mean.join(" "));
    }
    frame.legend(&mut svg, &algorithms);
    svg.push_str("</svg>\n");
    svg
}

/// Reads accuracy CSVs (files or directories) and writes `accuracy.svg` and
/// `accuracy_band.svg` into `dest`.
pub fn cmd_plot(inputs: &[PathBuf], dest: &Path, scale: YScale) -> Result<Vec<PathBuf>> {
    let files = expand_inputs(inputs)?;
    if files.is_empty() {
        bail!("no accuracy CSVs to plot");
    }
    let mut rows = Vec::new();
    for f in &files {
        rows.extend(read_accuracy(f)?);
    }
    let series = series_from_rows(&rows);
    if series.is_empty() {
        bail!("the accuracy CSVs hold no rows");
    }
    std::fs::create_dir_all(dest)?;
    let runs = dest.join("accuracy.svg");
    let band = dest.join("accuracy_band.svg");
    std::fs::write(&runs, render_runs(&series, scale, "L1 accuracy per run"))?;
    std::fs::write(&band, render_band(&series, scale, "Mean L1 accuracy"))?;
    Ok(vec![runs, band])
}

/// Default plot location for a trace directory.
pub fn default_plot_dir(trace_dir: &Path) -> PathBuf {
    OutDir::new(trace_dir).plots()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(alg: &str, id: usize, pts: &[(f64, f64)]) -> Series {
        Series {
            algorithm: alg.into(),
            run_id: id,
            points: pts.to_vec(),
        }
    }

    #[test]
    fn one_run_two_points() {
        let svg = render_runs(&[s("inpg", 0, &[(0.0, 0.5), (1.0, 0.0)])], YScale::Log, "t");
        assert_eq!(svg.matches("<polyline").count(), 1);
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        let pts = line.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
        assert_eq!(pts.split(' ').count(), 2);
    }

    #[test]
    fn rendering_is_deterministic() {
        let series: Vec<Series> = (0..10).map(|k| s(if k % 2 == 0 { "inpg" } else { "ipg" }, k, &[(0.0, 1.0 / (k + 1) as f64), (3.0, 1e-3), (4.0, 0.0)])).collect();
        assert_eq!(render_runs(&series, YScale::Log, "t"), render_runs(&series, YScale::Log, "t"));
        assert_eq!(render_runs(&series, YScale::Log, "t").matches("<polyline").count(), 10);
        let band = render_band(&series, YScale::Linear, "t");
        assert_eq!(band.matches("<polygon").count(), 2);
        assert!(!band.contains("NaN"));
    }

    #[test]
    fn band_statistics() {
        let a = s("x", 0, &[(0.0, 1.0), (1.0, 0.0)]);
        let b = s("x", 1, &[(0.0, 3.0), (1.0, 2.0), (2.0, 0.0)]);
        let band = mean_band(&[&a, &b]);
        assert_eq!(band[0], (0.0, 2.0, 1.0));
        assert_eq!(band[1], (1.0, 1.0, 1.0));
        // the first run holds 0 after it ends
        assert_eq!(band[2], (2.0, 0.0, 0.0));
    }
}
