//! Station availability snapshots: CSV with columns `station_id`,
//! `observed_at` (ISO-8601) and `bikes_available`.
//!
//! Timestamps carrying an offset (`Z`, `+09:00`) are converted to the city's
//! civil time; timestamps without one are taken as civil time already.

use std::io::Read;
use std::path::Path;

use bikeshare_core::ingest::{truncate_to_minute, StationId, StationSnapshot};
use chrono::{DateTime, NaiveDateTime};
use chrono_tz::Tz;

use super::ParseReport;
use crate::error::{Error, Result};

pub const COLUMNS: [&str; 3] = ["station_id", "observed_at", "bikes_available"];

const NAIVE_FORMATS: [&str; 4] = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%d %H:%M"];

pub fn parse_timestamp(value: &str, tz: Tz) -> Option<NaiveDateTime> {
    if let Ok(t) = DateTime::parse_from_rfc3339(value) {
        return Some(t.with_timezone(&tz).naive_local());
    }
    if let Ok(t) = DateTime::parse_from_str(value, "%Y-%m-%dT%H:%M%:z") {
        return Some(t.with_timezone(&tz).naive_local());
    }
    NAIVE_FORMATS.iter().find_map(|f| NaiveDateTime::parse_from_str(value, f).ok())
}

#[derive(Debug, Clone)]
pub struct SnapshotParse {
    /// In file order.
    pub snapshots: Vec<StationSnapshot>,
    pub report: ParseReport,
}

pub fn parse_snapshot_file(path: &Path, tz: Tz, threshold: f64) -> Result<SnapshotParse> {
    parse_snapshot_reader(super::open(path)?, path, tz, threshold)
}

pub fn parse_snapshot_reader(reader: impl Read, path: &Path, tz: Tz, threshold: f64) -> Result<SnapshotParse> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let mut ix = [0usize; 3];
    for (slot, name) in ix.iter_mut().zip(COLUMNS) {
        *slot = header
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}').trim() == name)
            .ok_or_else(|| Error::format(path, format!("missing column {name:?}")))?;
    }

    let mut report = ParseReport::new(path);
    let mut snapshots = Vec::new();
    let mut rec = csv::StringRecord::new();
    loop {
        let line = rdr.position().line() + 1;
        match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {
                report.total_rows += 1;
                let line = rec.position().map_or(line, |p| p.line());
                let get = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
                let (id, at, n) = (get(ix[0]), get(ix[1]), get(ix[2]));
                let parsed = if id.is_empty() {
                    Err("empty station id".to_string())
                } else {
                    match (parse_timestamp(at, tz), n.parse::<u32>()) {
                        (Some(t), Ok(n)) => Ok(StationSnapshot { station_id: StationId::new(id), observed_at: t, bikes_available: n }),
                        (None, _) => Err(format!("bad timestamp {at:?}")),
                        (_, Err(_)) => Err(format!("bad bike count {n:?}")),
                    }
                };
                match parsed {
                    Ok(s) => {
                        report.parsed += 1;
                        snapshots.push(s);
                    }
                    Err(reason) => report.malformed_row(line, reason),
                }
            }
            Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(Error::csv(path, e)),
            Err(e) => {
                report.total_rows += 1;
                report.malformed_row(line, e.to_string());
            }
        }
    }
    report.check(threshold)?;
    Ok(SnapshotParse { snapshots, report })
}

/// Truncates readings to the minute, orders them by (station, minute) and
/// keeps the first reading (in input order) of each (station, minute).
/// Returns the readings and the number of duplicates dropped.
pub fn normalize_snapshots(mut snapshots: Vec<StationSnapshot>) -> (Vec<StationSnapshot>, usize) {
    for s in &mut snapshots {
        s.observed_at = truncate_to_minute(s.observed_at);
    }
    snapshots.sort_by(|a, b| (&a.station_id, a.observed_at).cmp(&(&b.station_id, b.observed_at)));
    let before = snapshots.len();
    snapshots.dedup_by(|later, first| later.station_id == first.station_id && later.observed_at == first.observed_at);
    let dropped = before - snapshots.len();
    (snapshots, dropped)
}
