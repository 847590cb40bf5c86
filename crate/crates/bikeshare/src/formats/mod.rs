//! File formats: raw trip and snapshot inputs, and every artifact the
//! pipeline writes between stages.
//!
//! Floats are written in the shortest form that parses back to the same
//! value, in CSV and JSON alike.

pub mod distributions;
pub mod events;
pub mod matrix;
pub mod network;
pub mod ranks;
pub mod snapshots;
pub mod trips;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MALFORMED_THRESHOLD: f64 = 0.01;
const MAX_DIAGNOSTICS: usize = 20;

/// Shortest round-trip representation (`1e-9`, `0.25`, `3.0`).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowDiagnostic {
    pub line: u64,
    pub reason: String,
}

/// Row accounting for one raw input file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub path: String,
    /// Data rows, excluding the header.
    pub total_rows: u64,
    pub parsed: u64,
    /// Rows deliberately left out (no docking station).
    pub skipped: u64,
    pub malformed: u64,
    /// The first few malformed rows.
    pub diagnostics: Vec<RowDiagnostic>,
}

impl ParseReport {
    pub(crate) fn new(path: &Path) -> Self {
        Self { path: path.display().to_string(), ..Self::default() }
    }

    pub(crate) fn malformed_row(&mut self, line: u64, reason: impl Into<String>) {
        self.malformed += 1;
        if self.diagnostics.len() < MAX_DIAGNOSTICS {
            self.diagnostics.push(RowDiagnostic { line, reason: reason.into() });
        }
    }

    pub fn malformed_fraction(&self) -> f64 {
        if self.total_rows == 0 {
            0.0
        } else {
            self.malformed as f64 / self.total_rows as f64
        }
    }

    /// Fails when the malformed fraction exceeds `threshold`.
    pub(crate) fn check(&self, threshold: f64) -> Result<(), MalformedRows> {
        if self.malformed_fraction() > threshold {
            Err(MalformedRows { report: self.clone(), threshold })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}: {} of {} rows malformed, above the {} threshold{}", report.path, report.malformed, report.total_rows, threshold, diagnostics(report))]
pub struct MalformedRows {
    pub report: ParseReport,
    pub threshold: f64,
}

fn diagnostics(report: &ParseReport) -> String {
    report
        .diagnostics
        .iter()
        .map(|d| format!("\n  line {}: {}", d.line, d.reason))
        .collect()
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    Ok(csv::ReaderBuilder::new().from_reader(open(path)?))
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(create(path)?))
}

/// Checks that a CSV file starts with exactly `expected`.
pub(crate) fn expect_header<R: std::io::Read>(rdr: &mut csv::Reader<R>, path: &Path, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| Error::csv(path, e))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::format(
            path,
            format!("expected columns [{}], found [{}]", expected.join(", "), header.iter().collect::<Vec<_>>().join(", ")),
        ));
    }
    Ok(())
}

pub(crate) fn parse_field<T: std::str::FromStr>(path: &Path, line: u64, name: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::format(path, format!("line {line}: bad {name} {value:?}")))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::json(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| Error::json(path, e))
}

pub(crate) fn flush<W: Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Existing files matching `pattern`, sorted. No match is a validation error.
pub fn expand_glob(pattern: &str) -> Result<Vec<PathBuf>> {
    let paths = glob::glob(pattern).map_err(|e| Error::invalid(format!("bad input glob {pattern:?}: {e}")))?;
    let mut files: Vec<PathBuf> = paths.filter_map(|p| p.ok()).filter(|p| p.is_file()).collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(format!("input glob {pattern:?} matches no files")));
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-9, 1e9, 0.0, 5e-324, 123456.789] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(0.5), "0.5");
    }

    #[test]
    fn threshold_is_strict() {
        let mut r = ParseReport::new(Path::new("f.csv"));
        r.total_rows = 10;
        r.malformed_row(2, "x");
        assert!(r.check(0.1).is_ok());
        r.malformed_row(5, "y");
        let err = r.check(0.1).unwrap_err();
        assert!(err.to_string().contains("2 of 10 rows malformed"));
        assert!(err.to_string().contains("line 5: y"));
        assert!(r.check(0.25).is_ok());
    }
}
