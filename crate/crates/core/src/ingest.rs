//! Canonical per-station, per-minute usage events and the two routes that
//! produce them: individual trip records and periodic availability snapshots.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use chrono::{NaiveDate, NaiveDateTime, Timelike};

use crate::calendar::{Calendar, CalendarError, DayClass};

/// Opaque docking-station identifier, compared lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct StationId(pub String);

impl StationId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for StationId {
    fn from(s: &str) -> Self {
        Self(s.into())
    }
}

/// Drops seconds and sub-second precision.
pub fn truncate_to_minute(t: NaiveDateTime) -> NaiveDateTime {
    t.with_second(0)
        .and_then(|t| t.with_nanosecond(0))
        .expect("zero seconds is always valid")
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Coord {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TripError {
    #[error("end time {end} precedes start time {start}")]
    EndBeforeStart {
        start: NaiveDateTime,
        end: NaiveDateTime,
    },
    #[error("coordinate ({lat}, {lon}) out of range")]
    BadCoordinate { lat: f64, lon: f64 },
    #[error("empty station id")]
    EmptyStation,
}

impl Coord {
    pub fn new(lat: f64, lon: f64) -> Result<Self, TripError> {
        if (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon) {
            Ok(Self { lat, lon })
        } else {
            Err(TripError::BadCoordinate { lat, lon })
        }
    }
}

/// One ride. Timestamps are city-local civil time at minute precision.
#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    pub trip_id: String,
    pub start_station: StationId,
    pub start_time: NaiveDateTime,
    pub end_station: StationId,
    pub end_time: NaiveDateTime,
    pub start_coord: Option<Coord>,
    pub end_coord: Option<Coord>,
}

impl TripRecord {
    /// Validates the record invariants and truncates both timestamps to the minute.
    pub fn new(
        trip_id: impl Into<String>,
        start_station: StationId,
        start_time: NaiveDateTime,
        end_station: StationId,
        end_time: NaiveDateTime,
    ) -> Result<Self, TripError> {
        if start_station.0.is_empty() || end_station.0.is_empty() {
            return Err(TripError::EmptyStation);
        }
        let start_time = truncate_to_minute(start_time);
        let end_time = truncate_to_minute(end_time);
        if end_time < start_time {
            return Err(TripError::EndBeforeStart {
                start: start_time,
                end: end_time,
            });
        }
        Ok(Self {
            trip_id: trip_id.into(),
            start_station,
            start_time,
            end_station,
            end_time,
            start_coord: None,
            end_coord: None,
        })
    }

    pub fn with_coords(mut self, start: Option<Coord>, end: Option<Coord>) -> Self {
        self.start_coord = start;
        self.end_coord = end;
        self
    }
}

/// One bikes-available reading for one station.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StationSnapshot {
    pub station_id: StationId,
    pub observed_at: NaiveDateTime,
    pub bikes_available: u32,
}

/// Rentals and returns at one station in one minute. Never all-zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageEvent {
    pub station_id: StationId,
    pub minute: NaiveDateTime,
    pub rentals: u32,
    pub returns: u32,
}

impl UsageEvent {
    pub fn total(&self) -> u64 {
        u64::from(self.rentals) + u64::from(self.returns)
    }

    pub fn date(&self) -> NaiveDate {
        self.minute.date()
    }
}

/// Accumulates (station, minute) counts and emits events in canonical order,
/// sorted by `(minute, station_id)`. Insertion order never affects the output.
#[derive(Debug, Default, Clone)]
pub struct EventAccumulator {
    cells: BTreeMap<(NaiveDateTime, StationId), (u32, u32)>,
}

impl EventAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, station: &StationId, minute: NaiveDateTime, rentals: u32, returns: u32) {
        if rentals == 0 && returns == 0 {
            return;
        }
        let minute = truncate_to_minute(minute);
        let cell = self
            .cells
            .entry((minute, station.clone()))
            .or_insert((0, 0));
        cell.0 += rentals;
        cell.1 += returns;
    }

    pub fn extend_events<'a>(&mut self, events: impl IntoIterator<Item = &'a UsageEvent>) {
        for e in events {
            self.add(&e.station_id, e.minute, e.rentals, e.returns);
        }
    }

    pub fn finish(self) -> Vec<UsageEvent> {
        self.cells
            .into_iter()
            .map(|((minute, station_id), (rentals, returns))| UsageEvent {
                station_id,
                minute,
                rentals,
                returns,
            })
            .collect()
    }
}

/// One rental at the origin's departure minute and one return at the
/// destination's arrival minute per trip, aggregated per (station, minute).
pub fn trips_to_events(trips: &[TripRecord]) -> Vec<UsageEvent> {
    let mut acc = EventAccumulator::new();
    for trip in trips {
        acc.add(&trip.start_station, trip.start_time, 1, 0);
        acc.add(&trip.end_station, trip.end_time, 0, 1);
    }
    acc.finish()
}

pub const DEFAULT_MAX_GAP_MINUTES: i64 = 5;

/// A pair of consecutive readings too far apart to attribute a delta to.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SnapshotGap {
    pub station_id: StationId,
    pub from: NaiveDateTime,
    pub to: NaiveDateTime,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GapReport {
    pub gaps: Vec<SnapshotGap>,
}

impl GapReport {
    pub fn count(&self) -> usize {
        self.gaps.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SnapshotError {
    #[error("snapshots for station {station} are not strictly increasing in time at {at}")]
    Unsorted {
        station: StationId,
        at: NaiveDateTime,
    },
    #[error("max_gap must be at least one minute")]
    BadMaxGap,
}

/// Infers activity from signed availability deltas between consecutive
/// readings of the same station. A drop of `d` bikes is `d` rentals at the
/// later reading's minute, a rise is `d` returns. Rental and return within
/// the same interval cancel out and are invisible here.
///
/// Readings further apart than `max_gap_minutes` produce no event and are
/// listed in the returned [`GapReport`] instead.
pub fn snapshots_to_events(
    snapshots: &[StationSnapshot],
    max_gap_minutes: i64,
) -> Result<(Vec<UsageEvent>, GapReport), SnapshotError> {
    if max_gap_minutes < 1 {
        return Err(SnapshotError::BadMaxGap);
    }
    let mut last: BTreeMap<&StationId, (NaiveDateTime, u32)> = BTreeMap::new();
    let mut acc = EventAccumulator::new();
    let mut report = GapReport::default();

    for snap in snapshots {
        let t1 = truncate_to_minute(snap.observed_at);
        let n1 = snap.bikes_available;
        if let Some(&(t0, n0)) = last.get(&snap.station_id) {
            if t1 <= t0 {
                return Err(SnapshotError::Unsorted {
                    station: snap.station_id.clone(),
                    at: snap.observed_at,
                });
            }
            if (t1 - t0).num_minutes() > max_gap_minutes {
                report.gaps.push(SnapshotGap {
                    station_id: snap.station_id.clone(),
                    from: t0,
                    to: t1,
                });
            } else if n1 < n0 {
                acc.add(&snap.station_id, t1, n0 - n1, 0);
            } else if n1 > n0 {
                acc.add(&snap.station_id, t1, 0, n1 - n0);
            }
        }
        last.insert(&snap.station_id, (t1, n1));
    }
    Ok((acc.finish(), report))
}

/// Per-day-class totals for one city over its analysis period.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DatasetSummary {
    pub city: String,
    pub period_start: NaiveDate,
    pub period_end: NaiveDate,
    /// Rentals plus returns on weekday dates.
    pub weekday_total: u64,
    pub weekend_total: u64,
    pub weekday_stations: usize,
    pub weekend_stations: usize,
    pub total_stations: usize,
}

pub fn summarize(
    city: &str,
    events: &[UsageEvent],
    calendar: &Calendar,
) -> Result<DatasetSummary, CalendarError> {
    let mut weekday_total = 0u64;
    let mut weekend_total = 0u64;
    let mut weekday_stations = BTreeSet::new();
    let mut weekend_stations = BTreeSet::new();
    let mut all = BTreeSet::new();
    for e in events {
        match calendar.classify(e.date())? {
            DayClass::Weekday => {
                weekday_total += e.total();
                weekday_stations.insert(&e.station_id);
            }
            DayClass::Weekend => {
                weekend_total += e.total();
                weekend_stations.insert(&e.station_id);
            }
        }
        all.insert(&e.station_id);
    }
    Ok(DatasetSummary {
        city: city.into(),
        period_start: calendar.start(),
        period_end: calendar.end(),
        weekday_total,
        weekend_total,
        weekday_stations: weekday_stations.len(),
        weekend_stations: weekend_stations.len(),
        total_stations: all.len(),
    })
}
