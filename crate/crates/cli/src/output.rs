//! Artifact writers, plot stubs, and the verdict table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use convexo::envelope::{Axis, GridFunction};
use convexo::io::to_json;
use convexo::relax::{ComparisonReport, OptStatus};
use serde::Serialize;

use crate::config::Format;
use crate::error::CliError;

/// Collects the files written by one command.
#[derive(Debug)]
pub struct Writer {
    dir: PathBuf,
    pub format: Format,
    pub files: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path, format: Format) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            format,
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn text(&mut self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        self.files.push(path.clone());
        Ok(path)
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let text = to_json(value).map_err(|e| CliError::Numeric(format!("serializing {name}: {e}")))?;
        self.text(name, &text)
    }

    /// Writes `stem.csv` or `stem.json` according to the format.
    pub fn table<T: Serialize + ?Sized>(&mut self, stem: &str, csv: impl FnOnce() -> String, json: &T) -> Result<PathBuf, CliError> {
        match self.format {
            Format::Csv => self.text(&format!("{stem}.csv"), &csv()),
            Format::Json => self.json(&format!("{stem}.json"), json),
        }
    }

    pub fn grid_function(&mut self, stem: &str, f: &GridFunction, axis_names: &[String]) -> Result<PathBuf, CliError> {
        self.table(stem, || f.to_csv(axis_names), &GridFunctionJson::from(f))
    }
}

#[derive(Serialize)]
struct GridFunctionJson<'a> {
    axes: &'a [Axis],
    values: &'a [f64],
    mask: &'a [bool],
}

impl<'a> From<&'a GridFunction> for GridFunctionJson<'a> {
    fn from(f: &'a GridFunction) -> Self {
        GridFunctionJson {
            axes: f.grid().axes(),
            values: f.values(),
            mask: f.mask(),
        }
    }
}

/// Gnuplot script plotting `series` (file, column, title) against column 1.
pub fn gnuplot_lines(title: &str, series: &[(String, usize, String)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set title '{title}'");
    let plots: Vec<String> = series
        .iter()
        .map(|(file, col, name)| format!("'{file}' using 1:{col} with lines title '{name}'"))
        .collect();
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    s
}

/// Gnuplot script for a surface over two grid axes.
pub fn gnuplot_surface(title: &str, series: &[(String, String)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set title '{title}'");
    let plots: Vec<String> = series
        .iter()
        .map(|(file, name)| format!("'{file}' using 1:2:(column(4) > 0 ? column(3) : NaN) with points title '{name}'"))
        .collect();
    let _ = writeln!(s, "splot {}", plots.join(", \\\n      "));
    s
}

fn value(v: f64, status: OptStatus) -> String {
    match status {
        OptStatus::DivergentToMinusInfinity => "-inf (divergent)".into(),
        OptStatus::Finite => format!("{v:.6e}"),
    }
}

/// Human-readable summary of a comparison.
pub fn verdict_table(name: &str, r: &ComparisonReport) -> String {
    let mut rows: Vec<(String, String)> = vec![
        ("original".into(), value(r.original_value, r.original.status)),
        ("relaxed, lower system".into(), value(r.relaxed_value_sys1, r.sys1.status)),
        ("relaxed, upper system".into(), value(r.relaxed_value_sys2, r.sys2.status)),
        ("relaxed".into(), format!("{:.6e}", r.relaxed_value)),
        (
            "gap".into(),
            r.gap.map_or_else(|| "none (both divergent)".to_string(), |g| format!("{g:.6e}")),
        ),
        ("window".into(), format!("[{:.3e}, {:.3e}]", -r.tol_int, r.tol_gap)),
        ("family size".into(), r.family_size.to_string()),
        ("region exits".into(), r.region_exits.to_string()),
        ("unbounded region".into(), r.unbounded_region.to_string()),
    ];
    if r.rhs_overridden {
        rows.push(("relaxed dynamics".into(), "user supplied".into()));
    }
    if let Some(s) = &r.sufficiency {
        rows.push((
            "stagnation points".into(),
            format!("{} within {:.1e} of {:.6e}: {}", s.stagnation_values.len(), s.tol_gap, s.global_min, s.holds),
        ));
    }
    for e in &r.switch_sweep {
        rows.push((format!("sweep k = {}", e.switches), value(e.value, e.status)));
    }
    rows.push(("verdict".into(), if r.passed() { "PASS" } else { "FAIL" }.into()));

    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "{name}");
    for (k, v) in rows {
        let _ = writeln!(out, "  {k:<width$}  {v}");
    }
    out
}
