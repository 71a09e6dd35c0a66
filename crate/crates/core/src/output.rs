//! Plot-ready output files and atomic writes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::moments::MomentCurves;
use crate::pipeline::ValidationReport;
use crate::simulator::{DistributionGrid, EnsembleStats, EventTrace};

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn report_json(report: &ValidationReport) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// `t,x_empirical,mean,band_low,band_high` at every record time.
pub fn curves_csv(report: &ValidationReport) -> String {
    let c = &report.curves;
    let mut out = String::from("t,x_empirical,mean,band_low,band_high\n");
    for i in 0..c.times.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            c.times[i], report.empirical_reads.values[i], c.mean[i], c.band_low[i], c.band_high[i]
        );
    }
    out
}

/// `t,w_raw,w_smooth,w_fit` at the bin midpoints.
pub fn popularity_csv(report: &ValidationReport) -> String {
    let raw = &report.popularity_raw;
    let mut out = String::from("t,w_raw,w_smooth,w_fit\n");
    for i in 0..raw.times.len() {
        let t = raw.times[i];
        let _ = writeln!(
            out,
            "{},{},{},{}",
            t,
            raw.values[i],
            report.popularity_smooth.values[i],
            report.fit.predict(t)
        );
    }
    out
}

pub fn moments_csv(curves: &MomentCurves) -> String {
    let mut out = String::from("t,intensity,mean,variance,band_low,band_high\n");
    for i in 0..curves.times.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            curves.times[i],
            curves.intensity[i],
            curves.mean[i],
            curves.variance[i],
            curves.band_low[i],
            curves.band_high[i]
        );
    }
    out
}

/// `t,jump,x`, one row per shoot.
pub fn trace_csv(trace: &EventTrace) -> String {
    let mut out = String::from("t,jump,x\n");
    for ((t, j), x) in trace
        .event_times
        .iter()
        .zip(&trace.jump_sizes)
        .zip(trace.trajectory())
    {
        let _ = writeln!(out, "{t},{j},{x}");
    }
    out
}

/// Ensemble statistics next to the analytic mean and variance.
pub fn ensemble_csv(stats: &EnsembleStats, mean: &[f64], variance: &[f64]) -> String {
    let mut out = String::from("t,sample_mean,sample_var,standard_error,mean,variance\n");
    for i in 0..stats.times.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            stats.times[i],
            stats.sample_mean[i],
            stats.sample_var[i],
            stats.standard_error[i],
            mean[i],
            variance[i]
        );
    }
    out
}

/// Long format `t,x,p` plus one `leak` row per time with x = -1.
pub fn pmf_csv(grid: &DistributionGrid) -> String {
    let mut out = String::from("t,x,p\n");
    for (row, &t) in grid.times.iter().enumerate() {
        for (x, p) in grid.pmf[row].iter().enumerate() {
            if *p > 0.0 {
                let _ = writeln!(out, "{t},{x},{p:e}");
            }
        }
        let _ = writeln!(out, "{t},-1,{:e}", grid.leak[row]);
    }
    out
}

struct Panel {
    x0: f64,
    y0: f64,
    width: f64,
    height: f64,
    t_max: f64,
    v_max: f64,
}

impl Panel {
    fn point(&self, t: f64, v: f64) -> (f64, f64) {
        let x = self.x0 + self.width * (t / self.t_max);
        let y = self.y0 + self.height * (1.0 - v / self.v_max);
        (x, y)
    }

    fn polyline(&self, ts: &[f64], vs: &[f64], style: &str) -> String {
        let mut pts = String::new();
        for (&t, &v) in ts.iter().zip(vs) {
            let (x, y) = self.point(t, v);
            let _ = write!(pts, "{x:.2},{y:.2} ");
        }
        format!("<polyline fill=\"none\" {style} points=\"{}\"/>\n", pts.trim_end())
    }

    fn frame(&self, title: &str) -> String {
        format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#444\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\">{title}</text>\n",
            self.x0,
            self.y0,
            self.width,
            self.height,
            self.x0,
            self.y0 - 8.0
        )
    }
}

/// Two-panel SVG: popularity (raw, smoothed, fitted) and reads with the band.
pub fn render_svg(report: &ValidationReport) -> String {
    let raw = &report.popularity_raw;
    let c = &report.curves;
    let reads = &report.empirical_reads;
    let t_w = raw.times.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    let fit: Vec<f64> = raw.times.iter().map(|&t| report.fit.predict(t)).collect();
    let w_top = raw
        .values
        .iter()
        .chain(&fit)
        .fold(0.0f64, |m, &v| m.max(v))
        .max(f64::MIN_POSITIVE)
        * 1.05;
    let t_x = c.times.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    let x_top = c
        .band_high
        .iter()
        .chain(&reads.values)
        .chain(std::iter::once(&report.long_run_limit))
        .fold(0.0f64, |m, &v| m.max(v))
        .max(f64::MIN_POSITIVE)
        * 1.05;

    let left = Panel { x0: 40.0, y0: 40.0, width: 400.0, height: 280.0, t_max: t_w, v_max: w_top };
    let right = Panel { x0: 500.0, y0: 40.0, width: 400.0, height: 280.0, t_max: t_x, v_max: x_top };

    let mut svg = String::from(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"940\" height=\"360\" viewBox=\"0 0 940 360\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
    );
    svg += &left.frame("popularity w(t): empirical, smoothed, fitted");
    svg += &left.polyline(&raw.times, &raw.values, "stroke=\"#999\" stroke-width=\"1\"");
    svg += &left.polyline(&raw.times, &report.popularity_smooth.values, "stroke=\"#e08a00\" stroke-width=\"1.5\"");
    svg += &left.polyline(&raw.times, &fit, "stroke=\"#1f5fbf\" stroke-width=\"2\"");

    svg += &right.frame("reads X(t) with approximate confidence band");
    let mut band = String::new();
    for (&t, &v) in c.times.iter().zip(&c.band_high) {
        let (x, y) = right.point(t, v);
        let _ = write!(band, "{x:.2},{y:.2} ");
    }
    for (&t, &v) in c.times.iter().zip(&c.band_low).rev() {
        let (x, y) = right.point(t, v);
        let _ = write!(band, "{x:.2},{y:.2} ");
    }
    let _ = writeln!(
        svg,
        "<polygon fill=\"#9cc3ef\" fill-opacity=\"0.5\" stroke=\"none\" points=\"{}\"/>",
        band.trim_end()
    );
    svg += &right.polyline(&c.times, &c.mean, "stroke=\"#1f5fbf\" stroke-dasharray=\"6 4\" stroke-width=\"1.5\"");
    svg += &right.polyline(&reads.times, &reads.values, "stroke=\"#c62828\" stroke-width=\"1.5\"");
    let (lx0, ly) = right.point(0.0, report.long_run_limit);
    let (lx1, _) = right.point(t_x, report.long_run_limit);
    let _ = writeln!(
        svg,
        "<line x1=\"{lx0:.2}\" y1=\"{ly:.2}\" x2=\"{lx1:.2}\" y2=\"{ly:.2}\" stroke=\"#1f5fbf\" stroke-dasharray=\"2 3\"/>"
    );
    svg += "</svg>\n";
    svg
}
