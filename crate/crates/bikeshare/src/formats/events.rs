//! Canonical event CSV: `station_id,minute,rentals,returns`, sorted by
//! (minute, station_id), minutes as `YYYY-MM-DDTHH:MM`.

use std::io::{Read, Write};
use std::path::Path;

use bikeshare_core::ingest::{StationId, UsageEvent};
use chrono::NaiveDateTime;

use crate::error::{Error, Result};

pub const COLUMNS: [&str; 4] = ["station_id", "minute", "rentals", "returns"];
pub const MINUTE_FORMAT: &str = "%Y-%m-%dT%H:%M";

pub fn write_events(path: &Path, events: &[UsageEvent]) -> Result<()> {
    write_events_to(super::create(path)?, events).map_err(|e| Error::csv(path, e))
}

pub fn write_events_to(writer: impl Write, events: &[UsageEvent]) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(COLUMNS)?;
    for e in events {
        w.write_record([
            e.station_id.as_str(),
            &e.minute.format(MINUTE_FORMAT).to_string(),
            &e.rentals.to_string(),
            &e.returns.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events(path: &Path) -> Result<Vec<UsageEvent>> {
    read_events_from(super::open(path)?, path)
}

/// Rejects files that are not in canonical form: wrong header, unsorted or
/// duplicated (minute, station) keys, all-zero rows.
pub fn read_events_from(reader: impl Read, path: &Path) -> Result<Vec<UsageEvent>> {
    let mut rdr = csv::Reader::from_reader(reader);
    super::expect_header(&mut rdr, path, &COLUMNS)?;
    let mut events: Vec<UsageEvent> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let minute = NaiveDateTime::parse_from_str(&rec[1], MINUTE_FORMAT)
            .map_err(|_| Error::format(path, format!("line {line}: bad minute {:?}", &rec[1])))?;
        let e = UsageEvent {
            station_id: StationId::new(&rec[0]),
            minute,
            rentals: super::parse_field(path, line, "rentals", &rec[2])?,
            returns: super::parse_field(path, line, "returns", &rec[3])?,
        };
        if e.total() == 0 {
            return Err(Error::format(path, format!("line {line}: event without activity")));
        }
        if let Some(prev) = events.last() {
            if (prev.minute, &prev.station_id) >= (e.minute, &e.station_id) {
                return Err(Error::format(path, format!("line {line}: events not sorted by (minute, station_id)")));
            }
        }
        events.push(e);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn ev(s: &str, h: u32, m: u32, rentals: u32, returns: u32) -> UsageEvent {
        UsageEvent {
            station_id: s.into(),
            minute: NaiveDate::from_ymd_opt(2023, 10, 13).unwrap().and_hms_opt(h, m, 0).unwrap(),
            rentals,
            returns,
        }
    }

    #[test]
    fn round_trip() {
        let events = vec![ev("A", 8, 1, 1, 0), ev("B, north", 8, 1, 0, 2), ev("A", 8, 17, 3, 1)];
        let mut buf = Vec::new();
        write_events_to(&mut buf, &events).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("station_id,minute,rentals,returns\nA,2023-10-13T08:01,1,0\n"));
        assert_eq!(read_events_from(&buf[..], Path::new("e")).unwrap(), events);
    }

    #[test]
    fn rejects_unsorted_and_empty() {
        let unsorted = "station_id,minute,rentals,returns\nB,2023-10-13T08:01,1,0\nA,2023-10-13T08:01,1,0\n";
        assert!(read_events_from(unsorted.as_bytes(), Path::new("e")).is_err());
        let zero = "station_id,minute,rentals,returns\nA,2023-10-13T08:01,0,0\n";
        assert!(read_events_from(zero.as_bytes(), Path::new("e")).is_err());
        let header = "station,minute,rentals,returns\n";
        assert!(matches!(read_events_from(header.as_bytes(), Path::new("e")), Err(Error::Format { .. })));
    }
}
