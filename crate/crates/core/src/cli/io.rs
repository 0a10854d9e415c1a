//! CSV and JSON reading and writing.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::CliError;
use crate::attack::LabeledVariances;
use crate::cutoffs::CutoffCurves;
use crate::equilibrium::GameTrace;
use crate::error::GameError;
use crate::gbm::VariancePath;

/// 17 significant digits, enough to read back the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.kind() {
        csv::ErrorKind::Io(_) => CliError::Input(format!("{}: {e}", path.display())),
        _ => CliError::Input(format!(
            "{}: malformed CSV at row {}: {e}",
            path.display(),
            e.position().map_or(0, |p| p.line())
        )),
    }
}

/// A numeric table: header plus rows of parsed values. Row numbers in
/// diagnostics count the header as row 1.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

fn parse_cell(path: &Path, row: usize, column: &str, cell: &str) -> Result<f64, CliError> {
    let cell = cell.trim();
    match cell {
        "" => Ok(f64::NAN),
        "true" => Ok(1.0),
        "false" => Ok(0.0),
        _ => cell.parse::<f64>().map_err(|_| {
            CliError::Input(format!(
                "{}: row {row}, column '{column}': cannot parse '{cell}' as a number",
                path.display()
            ))
        }),
    }
}

/// Reads a CSV whose header must contain `required` (in any order).
/// Empty cells read as NaN.
pub fn read_table(path: &Path, required: &[&str]) -> Result<Table, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    for name in required {
        if !header.iter().any(|h| h == name) {
            return Err(CliError::Input(format!(
                "{}: missing column '{name}' (header is '{}')",
                path.display(),
                header.join(",")
            )));
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = i + 2;
        let parsed = rec
            .iter()
            .zip(&header)
            .map(|(cell, col)| parse_cell(path, row, col, cell))
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(parsed);
    }
    Ok(Table { header, rows })
}

/// Reads a `t,variance` series.
pub fn read_series(path: &Path) -> Result<VariancePath, CliError> {
    let table = read_table(path, &["t", "variance"])?;
    let times = table.column("t").unwrap_or_default();
    let values = table.column("variance").unwrap_or_default();
    if values.len() < 3 {
        return Err(GameError::InsufficientData {
            needed: 3,
            got: values.len(),
        }
        .into());
    }
    for (i, (&t, &v)) in times.iter().zip(&values).enumerate() {
        let row = i + 2;
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::Input(format!(
                "{}: row {row}, column 'variance': value {v} must be positive",
                path.display()
            )));
        }
        if i > 0 && !(t > times[i - 1]) {
            return Err(CliError::Input(format!(
                "{}: row {row}, column 't': times must be strictly increasing",
                path.display()
            )));
        }
    }
    Ok(VariancePath::new(times, values)?)
}

/// Reads a `variance,is_member` table.
pub fn read_labeled(path: &Path) -> Result<LabeledVariances, CliError> {
    let table = read_table(path, &["variance", "is_member"])?;
    let values = table.column("variance").unwrap_or_default();
    let flags = table.column("is_member").unwrap_or_default();
    let mut labels = Vec::with_capacity(flags.len());
    for (i, &f) in flags.iter().enumerate() {
        labels.push(match f {
            1.0 => true,
            0.0 => false,
            _ => {
                return Err(CliError::Input(format!(
                    "{}: row {}, column 'is_member': expected 0 or 1, got {f}",
                    path.display(),
                    i + 2
                )))
            }
        });
        if !(values[i] > 0.0 && values[i].is_finite()) {
            return Err(CliError::Input(format!(
                "{}: row {}, column 'variance': value {} must be positive",
                path.display(),
                i + 2,
                values[i]
            )));
        }
    }
    Ok(LabeledVariances::new(values, labels)?)
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

pub const TRACE_HEADER: &[&str] = &[
    "t", "ex_sy", "ex_eu", "pi", "U", "L", "Lplus", "Lminus", "blocked", "stopped",
];
pub const CURVES_HEADER: &[&str] = &["pi", "U", "Lplus", "Lminus", "L", "x_path", "u_cond_ok", "mono_ok"];

pub fn write_trace(path: &Path, trace: &GameTrace) -> Result<(), CliError> {
    let flag = |b: bool| if b { "1" } else { "0" }.to_string();
    write_rows(
        path,
        TRACE_HEADER,
        (0..trace.len()).map(|i| {
            let t = trace.t[i];
            vec![
                t.to_string(),
                fmt_f64(trace.ex_sy[i]),
                fmt_f64(trace.ex_eu[i]),
                fmt_f64(trace.pi[i]),
                fmt_f64(trace.u[i]),
                fmt_f64(trace.l[i]),
                fmt_f64(trace.lplus[i]),
                fmt_f64(trace.lminus[i]),
                flag(trace.blocked_by(t)),
                flag(trace.stopped_by(t)),
            ]
        }),
    )
}

pub fn write_curves(path: &Path, curves: &CutoffCurves) -> Result<(), CliError> {
    let flag = |b: bool| if b { "1" } else { "0" }.to_string();
    write_rows(
        path,
        CURVES_HEADER,
        (0..curves.len()).map(|i| {
            vec![
                fmt_f64(curves.pi_grid[i]),
                fmt_f64(curves.u[i]),
                fmt_f64(curves.lplus[i]),
                fmt_f64(curves.lminus[i]),
                fmt_f64(curves.l[i]),
                fmt_f64(curves.x_path[i]),
                flag(curves.u_cond_ok[i]),
                flag(curves.mono_ok[i]),
            ]
        }),
    )
}

pub fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), CliError> {
    write_rows(path, header, rows.into_iter())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}
