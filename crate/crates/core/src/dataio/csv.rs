//! Plain CSV output with a fixed float format.
//!
//! Floats are written in scientific notation with 17 significant digits, so every
//! `f64` survives a write/parse round trip and output bytes depend only on values.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::write_atomic;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Rows of string fields under a header.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width differs from header");
        self.rows.push(row);
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.render().as_bytes())
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                detail: "missing header".into(),
            })?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut csv = Csv::new(header);
        for (i, line) in lines.enumerate() {
            let row: Vec<String> = line.split(',').map(str::to_string).collect();
            if row.len() != csv.header.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 2,
                    detail: format!("{} fields, header has {}", row.len(), csv.header.len()),
                });
            }
            csv.rows.push(row);
        }
        Ok(csv)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

/// Writes equal-length named series as columns, preceded by an `index` column.
pub fn write_csv(path: &Path, series: &[(String, Vec<f64>)]) -> Result<()> {
    let len = check_series(series)?;
    let mut csv = Csv::new(std::iter::once("index".to_string()).chain(series.iter().map(|s| s.0.clone())));
    for i in 0..len {
        let mut row = vec![i.to_string()];
        row.extend(series.iter().map(|s| fmt_f64(s.1[i])));
        csv.push(row);
    }
    csv.write(path)
}

/// Reads a file written by [`write_csv`].
pub fn read_series_csv(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let csv = Csv::read(path)?;
    let mut out: Vec<(String, Vec<f64>)> = csv.header[1..]
        .iter()
        .map(|h| (h.clone(), Vec::with_capacity(csv.rows.len())))
        .collect();
    for (line, row) in csv.rows.iter().enumerate() {
        for (col, field) in row[1..].iter().enumerate() {
            let v = field.parse::<f64>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: line + 2,
                detail: format!("`{field}`: {e}"),
            })?;
            out[col].1.push(v);
        }
    }
    Ok(out)
}

pub(crate) fn check_series(series: &[(String, Vec<f64>)]) -> Result<usize> {
    let len = series
        .first()
        .map(|s| s.1.len())
        .ok_or_else(|| Error::InvalidArgument("no series to write".into()))?;
    if len == 0 {
        return Err(Error::InvalidArgument("series are empty".into()));
    }
    if let Some(bad) = series.iter().find(|s| s.1.len() != len) {
        return Err(Error::InvalidArgument(format!(
            "series `{}` has {} values, expected {len}",
            bad.0,
            bad.1.len()
        )));
    }
    Ok(len)
}

/// `key=value` lines.
pub fn render_key_values(entries: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_series_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let a: Vec<f64> = (0..10).map(|i| (i as f64).sqrt() / 3.0).collect();
        let b: Vec<f64> = (0..10).map(|i| -1e-300 * i as f64 + 0.1).collect();
        let series = vec![("a".to_string(), a), ("b".to_string(), b)];
        write_csv(&path, &series).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(text.ends_with('\n') && !text.contains('\r'));
        assert_eq!(read_series_csv(&path).unwrap(), series);
    }

    #[test]
    fn empty_series_is_an_error_and_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        assert!(write_csv(&path, &[]).is_err());
        assert!(write_csv(&path, &[("a".into(), vec![])]).is_err());
        assert!(write_csv(&path, &[("a".into(), vec![1.0]), ("b".into(), vec![])]).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn float_format() {
        assert_eq!(fmt_f64(2.5), "2.5000000000000000e0");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
