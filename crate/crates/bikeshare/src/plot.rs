//! Plot-ready tidy CSVs, one per figure.
//!
//! | figure | input                          | columns |
//! |--------|--------------------------------|---------|
//! | fig1   | `distributions.csv`            | city, day, direction, bin_index, probability |
//! | fig2   | `jsd_matrix.csv`               | day_a, day_b, jsd |
//! | fig3   | network directory or JSON      | src, dst, weight, in_top_k, src_community, dst_community |
//! | fig4   | city directory (ranks, fits)   | rank, proportion, day_class, fitted_value |
//! | fig5   | city directory (correspondence, model) | station_id, x, y, fitted_y |
//!
//! A directory argument resolves to the stage's standard file name.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bikeshare_core::calendar::DayClass;

use crate::error::{Error, Result};
use crate::formats::{distributions, fmt_f64, matrix, network, ranks};
use crate::stages;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
}

impl Figure {
    pub const ALL: [Figure; 5] = [Figure::Fig1, Figure::Fig2, Figure::Fig3, Figure::Fig4, Figure::Fig5];

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Figure::Fig1 => &["city", "day", "direction", "bin_index", "probability"],
            Figure::Fig2 => &["day_a", "day_b", "jsd"],
            Figure::Fig3 => &["src", "dst", "weight", "in_top_k", "src_community", "dst_community"],
            Figure::Fig4 => &["rank", "proportion", "day_class", "fitted_value"],
            Figure::Fig5 => &["station_id", "x", "y", "fitted_y"],
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = Figure::ALL.iter().position(|x| x == self).unwrap_or(0) + 1;
        write!(f, "fig{i}")
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .iter()
            .copied()
            .find(|f| f.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown figure {s:?} (expected fig1..fig5)")))
    }
}

fn resolve(input: &Path, name: &str) -> PathBuf {
    if input.is_dir() {
        input.join(name)
    } else {
        input.to_path_buf()
    }
}

fn dir_of(input: &Path) -> PathBuf {
    if input.is_dir() {
        input.to_path_buf()
    } else {
        input.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

/// Writes the tidy CSV for `figure` built from `stage_output`; returns the row count.
pub fn emit_plot_data(stage_output: &Path, figure: Figure, out: &Path) -> Result<usize> {
    if !stage_output.exists() {
        return Err(Error::invalid(format!("{}: no such stage output", stage_output.display())));
    }
    let rows = rows(stage_output, figure)?;
    let mut w = crate::formats::csv_writer(out)?;
    w.write_record(figure.columns()).map_err(|e| Error::csv(out, e))?;
    for r in &rows {
        w.write_record(r).map_err(|e| Error::csv(out, e))?;
    }
    crate::formats::flush(w, out)?;
    Ok(rows.len())
}

fn rows(input: &Path, figure: Figure) -> Result<Vec<Vec<String>>> {
    let mut rows = Vec::new();
    match figure {
        Figure::Fig1 => {
            let set = distributions::read_distributions(&resolve(input, stages::DISTRIBUTIONS))?;
            for (&(day, dir), d) in set.iter() {
                for (i, p) in d.probs.iter().enumerate() {
                    rows.push(vec![set.city.clone(), day.to_string(), dir.to_string(), i.to_string(), fmt_f64(*p)]);
                }
            }
        }
        Figure::Fig2 => {
            let m = matrix::read_matrix_csv(&resolve(input, stages::JSD_CSV))?;
            for (a, b, v) in m.cells() {
                rows.push(vec![a.to_string(), b.to_string(), fmt_f64(v)]);
            }
        }
        Figure::Fig3 => {
            let bundle = network::read_network(input)?;
            for e in &bundle.edges {
                let c = |l: &str| bundle.community_of(l).map_or(String::new(), |c| c.to_string());
                rows.push(vec![e.src.clone(), e.dst.clone(), fmt_f64(e.weight), e.in_top_k.to_string(), c(&e.src), c(&e.dst)]);
            }
        }
        Figure::Fig4 => {
            let dir = dir_of(input);
            for class in [DayClass::Weekday, DayClass::Weekend] {
                let dist = ranks::read_ranks(&dir.join(stages::rank_file(class)), class)?;
                let fit = ranks::read_fit(&dir.join(stages::fit_file(class)))?;
                for e in &dist.entries {
                    rows.push(vec![
                        e.rank.to_string(),
                        fmt_f64(e.proportion),
                        class.to_string(),
                        fmt_f64(fit.evaluate(e.rank as f64)),
                    ]);
                }
            }
        }
        Figure::Fig5 => {
            let dir = dir_of(input);
            let corr = ranks::read_correspondence(&dir.join(stages::CORRESPONDENCE))?;
            let model = ranks::read_model(&dir.join(stages::MODEL))?;
            for p in &corr.pairs {
                rows.push(vec![p.station_id.to_string(), p.x.to_string(), p.y.to_string(), fmt_f64(model.predict_rank(p.x))]);
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use bikeshare_core::divergence::JsdMatrix;

    #[test]
    fn figure_ids() {
        assert_eq!("fig3".parse::<Figure>().unwrap(), Figure::Fig3);
        assert_eq!(Figure::Fig5.to_string(), "fig5");
        assert!(matches!("fig6".parse::<Figure>(), Err(Error::Invalid(_))));
    }

    #[test]
    fn fig2_is_long_format() {
        let dir = tempfile::tempdir().unwrap();
        let labels: Vec<String> = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"].map(String::from).to_vec();
        let values = (0..7)
            .map(|i| (0..7).map(|j: usize| if i == j { 0.0 } else { 0.01 * i.abs_diff(j) as f64 }).collect())
            .collect();
        matrix::write_matrix_csv(&dir.path().join(stages::JSD_CSV), &JsdMatrix { labels, values }).unwrap();
        let out = dir.path().join("fig2.csv");
        assert_eq!(emit_plot_data(dir.path(), Figure::Fig2, &out).unwrap(), 49);
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 50);
        assert!(text.starts_with("day_a,day_b,jsd\nMon,Mon,0.0\nMon,Tue,0.01\n"));
    }

    #[test]
    fn wrong_input_shape() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(stages::JSD_CSV);
        std::fs::write(&p, "city,day\nNY,Mon\n").unwrap();
        assert!(matches!(emit_plot_data(&p, Figure::Fig1, &dir.path().join("o.csv")), Err(Error::Format { .. })));
        assert!(matches!(emit_plot_data(&dir.path().join("nope"), Figure::Fig1, &dir.path().join("o.csv")), Err(Error::Invalid(_))));
    }
}
