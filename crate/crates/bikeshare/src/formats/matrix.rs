//! JSD matrices as CSV (a `label` column, then one column per label) and JSON.

use std::fmt::Write as _;
use std::path::Path;

use bikeshare_core::divergence::JsdMatrix;

use super::{fmt_f64, parse_field};
use crate::error::{Error, Result};

pub fn write_matrix_csv(path: &Path, m: &JsdMatrix) -> Result<()> {
    let mut w = super::csv_writer(path)?;
    let err = |e| Error::csv(path, e);
    w.write_record(std::iter::once("label").chain(m.labels.iter().map(String::as_str))).map_err(err)?;
    for (label, row) in m.labels.iter().zip(&m.values) {
        w.write_record(std::iter::once(label.clone()).chain(row.iter().map(|v| fmt_f64(*v)))).map_err(err)?;
    }
    super::flush(w, path)
}

pub fn write_matrix_json(path: &Path, m: &JsdMatrix) -> Result<()> {
    super::write_json(path, m)
}

/// Reads a matrix CSV, checking it is square, symmetric, zero on the
/// diagonal and bounded by [0, 1].
pub fn read_matrix_csv(path: &Path) -> Result<JsdMatrix> {
    let mut rdr = super::csv_reader(path)?;
    let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    if header.get(0) != Some("label") {
        return Err(Error::format(path, "first column must be \"label\""));
    }
    let labels: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let mut values = Vec::with_capacity(labels.len());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if labels.get(i).map(String::as_str) != rec.get(0) {
            return Err(Error::format(path, format!("line {line}: row label does not match column order")));
        }
        let row = rec.iter().skip(1).map(|v| parse_field::<f64>(path, line, "value", v)).collect::<Result<Vec<_>>>()?;
        values.push(row);
    }
    if values.len() != labels.len() {
        return Err(Error::format(path, "matrix is not square"));
    }
    for i in 0..labels.len() {
        if values[i][i] != 0.0 {
            return Err(Error::format(path, "non-zero diagonal"));
        }
        for j in 0..labels.len() {
            let v = values[i][j];
            if v != values[j][i] || !(0.0..=1.0).contains(&v) {
                return Err(Error::format(path, format!("entry ({i}, {j}) is asymmetric or outside [0, 1]")));
            }
        }
    }
    Ok(JsdMatrix { labels, values })
}

/// Fixed-width table with three decimals, for terminal reports.
pub fn render_table(m: &JsdMatrix) -> String {
    let w = m.labels.iter().map(String::len).max().unwrap_or(0).max(5);
    let mut out = format!("{:w$}", "");
    for l in &m.labels {
        let _ = write!(out, " {l:>w$}");
    }
    out.push('\n');
    for (l, row) in m.labels.iter().zip(&m.values) {
        let _ = write!(out, "{l:w$}");
        for v in row {
            let _ = write!(out, " {v:>w$.3}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> JsdMatrix {
        JsdMatrix {
            labels: vec!["Mon".into(), "Tue".into(), "Sat".into()],
            values: vec![vec![0.0, 0.004, 0.05], vec![0.004, 0.0, 0.061], vec![0.05, 0.061, 0.0]],
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_matrix_csv(&p, &sample()).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("label,Mon,Tue,Sat\nMon,0.0,0.004,0.05\n"));
        assert_eq!(read_matrix_csv(&p).unwrap(), sample());
    }

    #[test]
    fn rejects_asymmetric() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "label,a,b\na,0,0.1\nb,0.2,0\n").unwrap();
        assert!(read_matrix_csv(&p).is_err());
    }

    #[test]
    fn table_has_three_decimals() {
        let t = render_table(&sample());
        assert!(t.contains("0.004"));
        assert!(t.contains("0.061"));
        assert_eq!(t.lines().count(), 4);
    }
}
