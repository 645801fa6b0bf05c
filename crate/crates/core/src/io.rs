//! Report emission: CSV tables and JSON documents.
//!
//! Floats use Rust's shortest round-trip formatting, complex numbers are
//! split into `re_*`/`im_*` columns (CSV) or `{"re", "im"}` objects (JSON).

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiments::{ConvergenceReport, CountingReport, RegimeRow};
use crate::foldylax::FarFieldSamples;
use crate::vie::{ScanReport, SpectrumReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

pub fn f(x: f64) -> String {
    format!("{x}")
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidInput(format!("could not serialise report: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), message: e.to_string() }
}

/// Writes `table` as CSV or `json` as JSON to `dir/stem.ext`; returns the path.
pub fn emit<T: Serialize + ?Sized>(
    dir: &Path,
    stem: &str,
    format: Format,
    table: &Table,
    json: &T,
) -> Result<std::path::PathBuf> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    let body = match format {
        Format::Csv => table.to_csv(),
        Format::Json => to_json(json)?,
    };
    write_file(&path, &body)?;
    Ok(path)
}

pub fn far_field_table(ff: &FarFieldSamples) -> Table {
    let mut t = Table::new(&["x1", "x2", "x3", "re_e1", "im_e1", "re_e2", "im_e2", "re_e3", "im_e3"]);
    for (d, v) in ff.directions.iter().zip(&ff.values) {
        t.push(vec![f(d[0]), f(d[1]), f(d[2]), f(v[0].re), f(v[0].im), f(v[1].re), f(v[1].im), f(v[2].re), f(v[2].im)]);
    }
    t
}

pub fn convergence_table(r: &ConvergenceReport) -> Table {
    let mut t = Table::new(&[
        "a",
        "d",
        "count",
        "k",
        "xi",
        "sup_error",
        "l2_error",
        "relative_error",
        "sup_error_doubled",
        "foldylax_residual",
        "lse_residual",
        "lse_iterations",
        "degenerate",
        "status",
    ]);
    for row in &r.rows {
        t.push(vec![
            f(row.a),
            f(row.d),
            row.count.to_string(),
            f(row.k),
            f(row.xi),
            f(row.sup_error),
            f(row.l2_error),
            f(row.relative_error),
            f(row.sup_error_doubled),
            f(row.foldylax_residual),
            f(row.lse_residual),
            row.lse_iterations.to_string(),
            row.degenerate.to_string(),
            csv_text(&row.status),
        ]);
    }
    t
}

pub fn regime_table(rows: &[RegimeRow]) -> Table {
    let mut t = Table::new(&["xi", "sign", "mu", "regime", "in_window"]);
    for r in rows {
        t.push(vec![f(r.xi), r.sign.label().into(), f(r.mu), r.regime.clone(), r.in_window.to_string()]);
    }
    t
}

pub fn scan_table(r: &ScanReport) -> Table {
    let mut t = Table::new(&[
        "beta",
        "xi",
        "k",
        "h_norm",
        "incident_norm",
        "ratio",
        "far_max",
        "backscatter_angle",
        "residual",
        "iterations",
        "status",
    ]);
    for row in &r.rows {
        t.push(vec![
            f(row.beta),
            f(row.xi),
            f(row.k),
            f(row.h_norm),
            f(row.incident_norm),
            f(row.ratio),
            f(row.far_max),
            f(row.backscatter_angle),
            f(row.residual),
            row.iterations.to_string(),
            csv_text(&row.status),
        ]);
    }
    t
}

/// Long format: one row per (statistic, d).
pub fn counting_table(r: &CountingReport) -> Table {
    let mut t = Table::new(&["statistic", "d", "count", "value"]);
    for (i, k) in r.kappas.iter().enumerate() {
        for row in &r.rows {
            t.push(vec![format!("sum_kappa_{k}"), f(row.d), row.count.to_string(), f(row.sums[i])]);
        }
    }
    for row in &r.boundary_rows {
        t.push(vec!["boundary".into(), f(row.d), row.count.to_string(), f(row.value)]);
    }
    t
}

pub fn spectrum_table(r: &SpectrumReport) -> Table {
    let mut t = Table::new(&["eigenvalue", "residual"]);
    for v in &r.ritz {
        t.push(vec![f(v.eigenvalue), f(v.residual)]);
    }
    t
}

/// Long-format plot data: one (series, x, y) row per point.
#[derive(Clone, Debug, Default)]
pub struct PlotData {
    table: Table,
}

impl PlotData {
    pub fn new() -> Self {
        PlotData { table: Table::new(&["series", "x", "y"]) }
    }

    pub fn series(&mut self, label: &str, points: impl IntoIterator<Item = (f64, f64)>) -> &mut Self {
        for (x, y) in points {
            if x.is_finite() && y.is_finite() {
                self.table.push(vec![csv_text(label), f(x), f(y)]);
            }
        }
        self
    }

    pub fn table(&self) -> &Table {
        &self.table
    }
}

pub fn convergence_plot(r: &ConvergenceReport) -> PlotData {
    let mut p = PlotData::new();
    p.series("sup_error_vs_a", r.rows.iter().map(|row| (row.a, row.sup_error)));
    p.series("l2_error_vs_a", r.rows.iter().map(|row| (row.a, row.l2_error)));
    p
}

pub fn scan_plot(r: &ScanReport) -> PlotData {
    let mut p = PlotData::new();
    p.series("h_norm_vs_abs_beta", r.rows.iter().filter(|row| row.ok()).map(|row| (row.beta.abs(), row.h_norm)));
    p.series("far_max_vs_abs_beta", r.rows.iter().filter(|row| row.ok()).map(|row| (row.beta.abs(), row.far_max)));
    p
}

pub fn counting_plot(r: &CountingReport) -> PlotData {
    let mut p = PlotData::new();
    for (i, kappa) in r.kappas.iter().enumerate() {
        p.series(&format!("sum_kappa_{kappa}_vs_d"), r.rows.iter().map(|row| (row.d, row.sums[i])));
    }
    p.series("boundary_vs_d", r.boundary_rows.iter().map(|row| (row.d, row.value)));
    p
}

pub fn spectrum_plot(r: &SpectrumReport) -> PlotData {
    let mut p = PlotData::new();
    p.series("eigenvalue_vs_index", r.eigenvalues.iter().enumerate().map(|(i, l)| (i as f64, *l)));
    p
}

/// Quotes a free-text CSV cell.
fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
