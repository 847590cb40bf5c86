//! Raw trip CSV files, read through a [`TripSchema`].

use std::io::Read;
use std::path::Path;

use bikeshare_core::ingest::{Coord, StationId, TripRecord};
use chrono::NaiveDateTime;

use super::ParseReport;
use crate::error::{Error, Result};
use crate::schema::{Column, TripSchema};

#[derive(Debug, Clone)]
pub struct TripParse {
    /// In file order.
    pub records: Vec<TripRecord>,
    pub report: ParseReport,
}

struct Indices {
    trip_id: usize,
    start_station: usize,
    start_time: usize,
    end_station: usize,
    end_time: usize,
    start: Option<(usize, usize)>,
    end: Option<(usize, usize)>,
}

fn index_of(path: &Path, header: &csv::StringRecord, col: &Column) -> Result<usize> {
    match col {
        Column::Index(i) if *i < header.len() => Ok(*i),
        Column::Index(i) => Err(Error::format(path, format!("column {i} out of range ({} columns)", header.len()))),
        Column::Name(name) => header
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}').trim() == name)
            .ok_or_else(|| Error::format(path, format!("missing column {name:?}"))),
    }
}

fn pair(path: &Path, header: &csv::StringRecord, lat: &Option<Column>, lng: &Option<Column>) -> Result<Option<(usize, usize)>> {
    match (lat, lng) {
        (Some(a), Some(b)) => Ok(Some((index_of(path, header, a)?, index_of(path, header, b)?))),
        _ => Ok(None),
    }
}

enum Row {
    Trip(TripRecord),
    Skipped,
}

fn coord(rec: &csv::StringRecord, cols: Option<(usize, usize)>) -> Result<Option<Coord>, String> {
    let Some((a, b)) = cols else { return Ok(None) };
    let (lat, lng) = (rec.get(a).unwrap_or("").trim(), rec.get(b).unwrap_or("").trim());
    if lat.is_empty() || lng.is_empty() {
        return Ok(None);
    }
    let lat: f64 = lat.parse().map_err(|_| format!("bad latitude {lat:?}"))?;
    let lng: f64 = lng.parse().map_err(|_| format!("bad longitude {lng:?}"))?;
    Coord::new(lat, lng).map(Some).map_err(|e| e.to_string())
}

fn row(rec: &csv::StringRecord, ix: &Indices, schema: &TripSchema) -> Result<Row, String> {
    let field = |i: usize| rec.get(i).map(str::trim).ok_or_else(|| format!("missing field {i}"));
    let time = |i: usize| -> Result<NaiveDateTime, String> {
        let v = field(i)?;
        NaiveDateTime::parse_from_str(v, &schema.timestamp_format).map_err(|_| format!("bad timestamp {v:?}"))
    };
    let (from, to) = (field(ix.start_station)?, field(ix.end_station)?);
    if from.is_empty() || to.is_empty() {
        return if schema.skip_missing_station { Ok(Row::Skipped) } else { Err("empty station id".into()) };
    }
    let trip = TripRecord::new(
        field(ix.trip_id)?.to_string(),
        StationId::new(from),
        time(ix.start_time)?,
        StationId::new(to),
        time(ix.end_time)?,
    )
    .map_err(|e| e.to_string())?;
    Ok(Row::Trip(trip.with_coords(coord(rec, ix.start)?, coord(rec, ix.end)?)))
}

/// Parses one file. Malformed rows are counted with their line numbers; more
/// than `threshold` (a fraction) of them is an error.
pub fn parse_trip_file(path: &Path, schema: &TripSchema, threshold: f64) -> Result<TripParse> {
    parse_trip_reader(super::open(path)?, path, schema, threshold)
}

pub fn parse_trip_reader(reader: impl Read, path: &Path, schema: &TripSchema, threshold: f64) -> Result<TripParse> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let c = &schema.columns;
    let ix = Indices {
        trip_id: index_of(path, &header, &c.trip_id)?,
        start_station: index_of(path, &header, &c.start_station)?,
        start_time: index_of(path, &header, &c.start_time)?,
        end_station: index_of(path, &header, &c.end_station)?,
        end_time: index_of(path, &header, &c.end_time)?,
        start: pair(path, &header, &c.start_lat, &c.start_lng)?,
        end: pair(path, &header, &c.end_lat, &c.end_lng)?,
    };

    let mut report = ParseReport::new(path);
    let mut records = Vec::new();
    let mut rec = csv::StringRecord::new();
    loop {
        let line = rdr.position().line() + 1;
        match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {
                report.total_rows += 1;
                let line = rec.position().map_or(line, |p| p.line());
                match row(&rec, &ix, schema) {
                    Ok(Row::Trip(t)) => {
                        report.parsed += 1;
                        records.push(t);
                    }
                    Ok(Row::Skipped) => report.skipped += 1,
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
    Ok(TripParse { records, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn schema() -> TripSchema {
        serde_json::from_str(
            r#"{"id": "t", "timestamp_format": "%Y-%m-%dT%H:%M",
                "columns": {"trip_id": "id", "start_station": "from", "start_time": "start",
                            "end_station": "to", "end_time": "end"}}"#,
        )
        .unwrap()
    }

    fn parse(text: &str, threshold: f64) -> Result<TripParse> {
        parse_trip_reader(text.as_bytes(), Path::new("fixture.csv"), &schema(), threshold)
    }

    #[test]
    fn maps_fields() {
        let p = parse("id,from,start,to,end\n1,A,2023-10-13T08:01,B,2023-10-13T08:17\n", 0.01).unwrap();
        let t = &p.records[0];
        let day = NaiveDate::from_ymd_opt(2023, 10, 13).unwrap();
        assert_eq!(t.start_station.as_str(), "A");
        assert_eq!(t.end_station.as_str(), "B");
        assert_eq!(t.start_time, day.and_hms_opt(8, 1, 0).unwrap());
        assert_eq!(t.end_time, day.and_hms_opt(8, 17, 0).unwrap());
        assert_eq!(p.report.parsed, 1);
    }

    #[test]
    fn end_before_start_is_malformed() {
        let p = parse("id,from,start,to,end\n1,A,2023-10-13T08:17,B,2023-10-13T08:01\n", 1.0).unwrap();
        assert!(p.records.is_empty());
        assert_eq!(p.report.malformed, 1);
        assert_eq!(p.report.diagnostics[0].line, 2);
    }

    /// Ten data rows, two malformed (a reversed trip on line 4, a bad
    /// timestamp on line 9).
    const TEN_ROWS: &str = "id,from,start,to,end
1,A,2023-10-13T08:01,B,2023-10-13T08:17
2,B,2023-10-13T08:05,C,2023-10-13T08:20
3,C,2023-10-13T09:30,A,2023-10-13T09:10
4,A,2023-10-13T10:00,A,2023-10-13T10:00
5,D,2023-10-13T11:11,B,2023-10-13T11:40
6,B,2023-10-13T12:00,D,2023-10-13T12:31
7,C,2023-10-13T13:45,C,2023-10-13T14:02
8,A,2023-10-13T25:00,B,2023-10-13T15:10
9,D,2023-10-13T16:20,A,2023-10-13T16:58
10,B,2023-10-13T17:05,C,2023-10-13T17:25
";

    #[test]
    fn ten_row_fixture() {
        let p = parse(TEN_ROWS, 0.25).unwrap();
        assert_eq!(p.records.len(), 8);
        assert_eq!(p.report.total_rows, 10);
        assert_eq!(p.report.malformed, 2);
        let lines: Vec<u64> = p.report.diagnostics.iter().map(|d| d.line).collect();
        assert_eq!(lines, vec![4, 9]);
        let ids: Vec<&str> = p.records.iter().map(|t| t.trip_id.as_str()).collect();
        assert_eq!(ids, vec!["1", "2", "4", "5", "6", "7", "9", "10"]);
    }

    #[test]
    fn ten_row_fixture_over_threshold() {
        // 2 of 10 is 20%, above a 10% threshold.
        match parse(TEN_ROWS, 0.10) {
            Err(Error::Malformed(m)) => {
                assert_eq!(m.report.malformed, 2);
                assert_eq!(m.report.diagnostics.len(), 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ragged_rows_and_missing_stations() {
        let mut s = schema();
        s.skip_missing_station = true;
        let text = "id,from,start,to,end\n1,A,2023-10-13T08:01\n2,,2023-10-13T08:01,B,2023-10-13T08:02\n";
        let p = parse_trip_reader(text.as_bytes(), Path::new("f"), &s, 1.0).unwrap();
        assert_eq!((p.report.malformed, p.report.skipped, p.report.parsed), (1, 1, 0));
    }

    #[test]
    fn missing_column_is_format_error() {
        assert!(matches!(parse("id,from,start,to\n", 0.01), Err(Error::Format { .. })));
    }

    #[test]
    fn positional_columns_and_coordinates() {
        let s: TripSchema = serde_json::from_str(
            r#"{"id": "p", "delimiter": ";", "timestamp_format": "%d/%m/%Y %H:%M",
                "columns": {"trip_id": 0, "start_station": 1, "start_time": 2, "end_station": 3, "end_time": 4,
                            "start_lat": 5, "start_lng": 6, "end_lat": 7, "end_lng": 8}}"#,
        )
        .unwrap();
        let text = "a;b;c;d;e;f;g;h;i\nx;S1;13/10/2023 08:01;S2;13/10/2023 08:30;51.5;-0.1;;\ny;S1;13/10/2023 08:01;S2;13/10/2023 08:30;95;0;1;1\n";
        let p = parse_trip_reader(text.as_bytes(), Path::new("f"), &s, 1.0).unwrap();
        assert_eq!(p.records.len(), 1);
        assert!(p.records[0].start_coord.is_some());
        assert!(p.records[0].end_coord.is_none());
        assert_eq!(p.report.malformed, 1);
    }
}
