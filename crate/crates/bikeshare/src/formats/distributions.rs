//! Long-format distribution CSV:
//! `city,day,direction,bin_index,probability,count`, one row per bin of each
//! of the fourteen (day, direction) distributions, Mon..Sun, rental first.

use std::collections::BTreeMap;
use std::path::Path;

use bikeshare_core::calendar::Day;
use bikeshare_core::timeseries::{DayDistribution, DayKey, Direction, DistributionSet, MINUTES_PER_DAY};

use super::{fmt_f64, parse_field};
use crate::error::{Error, Result};

pub const COLUMNS: [&str; 6] = ["city", "day", "direction", "bin_index", "probability", "count"];

pub fn write_distributions(path: &Path, set: &DistributionSet) -> Result<()> {
    let mut w = super::csv_writer(path)?;
    let err = |e| Error::csv(path, e);
    w.write_record(COLUMNS).map_err(err)?;
    for (&(day, dir), d) in set.iter() {
        for (i, (p, c)) in d.probs.iter().zip(&d.counts).enumerate() {
            w.write_record([set.city.as_str(), day.as_str(), dir.as_str(), &i.to_string(), &fmt_f64(*p), &c.to_string()])
                .map_err(err)?;
        }
    }
    super::flush(w, path)
}

/// Rebuilds the set from counts and checks the stored probabilities agree.
pub fn read_distributions(path: &Path) -> Result<DistributionSet> {
    let mut rdr = super::csv_reader(path)?;
    super::expect_header(&mut rdr, path, &COLUMNS)?;
    let mut city: Option<String> = None;
    let mut cells: BTreeMap<(Day, Direction), Vec<(usize, f64, u64)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        match &city {
            None => city = Some(rec[0].to_string()),
            Some(c) if c != &rec[0] => return Err(Error::format(path, format!("line {line}: more than one city"))),
            _ => {}
        }
        let day: Day = parse_field(path, line, "day", &rec[1])?;
        let dir: Direction = parse_field(path, line, "direction", &rec[2])?;
        cells.entry((day, dir)).or_default().push((
            parse_field(path, line, "bin_index", &rec[3])?,
            parse_field(path, line, "probability", &rec[4])?,
            parse_field(path, line, "count", &rec[5])?,
        ));
    }
    let city = city.ok_or_else(|| Error::format(path, "no rows"))?;

    let bins = cells.values().next().map_or(0, Vec::len);
    if bins == 0 || MINUTES_PER_DAY as usize % bins != 0 {
        return Err(Error::format(path, format!("{bins} bins per day does not divide a day")));
    }
    let bin_width = MINUTES_PER_DAY / bins as u32;
    let mut dists = Vec::with_capacity(cells.len());
    for ((day, dir), rows) in cells {
        if rows.len() != bins || rows.iter().enumerate().any(|(i, r)| r.0 != i) {
            return Err(Error::format(path, format!("{day} {dir}: bins missing or out of order")));
        }
        let d = DayDistribution::from_counts(&city, DayKey::Day(day), dir, bin_width, rows.iter().map(|r| r.2).collect())?;
        if d.probs.iter().zip(&rows).any(|(p, r)| (p - r.1).abs() > 1e-12) {
            return Err(Error::format(path, format!("{day} {dir}: probabilities disagree with counts")));
        }
        dists.push(d);
    }
    DistributionSet::from_distributions(&city, bin_width, dists).map_err(|e| Error::format(path, e.to_string()))
}
