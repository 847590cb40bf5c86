//! Deterministic synthetic fixture: six cities in their native raw formats
//! (five trip feeds, one snapshot feed) plus a pipeline config.
//!
//! Station popularity follows `k^-0.3 exp(-(k/k_c)^1.5)` with a perturbed
//! weekend ranking; weekday starts are bimodal (morning and evening peaks),
//! weekend starts are a broad midday hump, and Fridays mix the two.

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, TimeZone, Utc, Weekday};
use chrono_tz::Tz;
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde_json::json;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub seed: u64,
    pub start: NaiveDate,
    pub days: u32,
    pub stations: usize,
    pub weekday_trips: usize,
    pub weekend_trips: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            seed: 7,
            start: NaiveDate::from_ymd_opt(2023, 10, 2).expect("valid date"),
            days: 14,
            stations: 60,
            weekday_trips: 500,
            weekend_trips: 350,
        }
    }
}

#[derive(Clone, Copy)]
enum Feed {
    Lyft(&'static str),
    Santander,
    Snapshots,
}

struct CitySpec {
    id: &'static str,
    timezone: &'static str,
    feed: Feed,
    /// Morning and evening weekday peaks, in hours.
    peaks: (f64, f64),
    midday: f64,
    lat: f64,
    lng: f64,
}

const CITIES: [CitySpec; 6] = [
    CitySpec { id: "ny", timezone: "America/New_York", feed: Feed::Lyft("citibike"), peaks: (8.5, 17.75), midday: 14.0, lat: 40.73, lng: -73.99 },
    CitySpec { id: "chicago", timezone: "America/Chicago", feed: Feed::Lyft("divvy"), peaks: (8.0, 17.5), midday: 13.5, lat: 41.88, lng: -87.63 },
    CitySpec { id: "dc", timezone: "America/New_York", feed: Feed::Lyft("capitalbikeshare"), peaks: (8.0, 17.25), midday: 13.5, lat: 38.90, lng: -77.03 },
    CitySpec { id: "boston", timezone: "America/New_York", feed: Feed::Lyft("bluebikes"), peaks: (8.25, 17.5), midday: 14.0, lat: 42.36, lng: -71.06 },
    CitySpec { id: "london", timezone: "Europe/London", feed: Feed::Santander, peaks: (8.0, 18.0), midday: 14.5, lat: 51.51, lng: -0.12 },
    CitySpec { id: "tokyo", timezone: "Asia/Tokyo", feed: Feed::Snapshots, peaks: (7.5, 19.0), midday: 13.0, lat: 35.68, lng: 139.76 },
];

pub fn city_ids() -> impl Iterator<Item = &'static str> {
    CITIES.iter().map(|c| c.id)
}

struct Trip {
    start: usize,
    end: usize,
    t0: NaiveDateTime,
    t1: NaiveDateTime,
}

fn popularity(n: usize, cutoff: f64) -> Vec<f64> {
    (1..=n).map(|k| (k as f64).powf(-0.3) * (-(k as f64 / cutoff).powf(1.5)).exp()).collect()
}

fn start_hour(rng: &mut ChaCha8Rng, spec: &CitySpec, weekend: bool) -> f64 {
    let u: f64 = rng.random();
    let h = if weekend {
        if u < 0.8 {
            Normal::new(spec.midday, 3.0).expect("sd > 0").sample(rng)
        } else {
            rng.random_range(7.0..23.0)
        }
    } else if u < 0.4 {
        Normal::new(spec.peaks.0, 0.8).expect("sd > 0").sample(rng)
    } else if u < 0.8 {
        Normal::new(spec.peaks.1, 1.2).expect("sd > 0").sample(rng)
    } else {
        rng.random_range(6.0..23.0)
    };
    h.clamp(0.0, 23.99)
}

fn simulate_trips(rng: &mut ChaCha8Rng, spec: &CitySpec, opts: &SynthOptions, stations: usize) -> Vec<Trip> {
    let weekday_w = popularity(stations, stations as f64 * 0.45);
    let jitter = Normal::<f64>::new(0.0, 0.35).expect("sd > 0");
    let weekend_w: Vec<f64> = weekday_w.iter().map(|w| w * jitter.sample(rng).exp()).collect();
    let weekday_pick = WeightedIndex::new(&weekday_w).expect("positive weights");
    let weekend_pick = WeightedIndex::new(&weekend_w).expect("positive weights");
    let duration = Exp::new(1.0 / 12.0).expect("rate > 0");

    let mut trips = Vec::new();
    for d in 0..opts.days {
        let date = opts.start + Duration::days(i64::from(d));
        let weekend = matches!(date.weekday(), Weekday::Sat | Weekday::Sun);
        let friday = date.weekday() == Weekday::Fri;
        let n = if weekend { opts.weekend_trips } else { opts.weekday_trips };
        let pick = if weekend { &weekend_pick } else { &weekday_pick };
        for _ in 0..n {
            let like_weekend = weekend || (friday && rng.random::<f64>() < 0.3);
            let hour = start_hour(rng, spec, like_weekend);
            let t0 = date.and_hms_opt(0, 0, 0).expect("midnight") + Duration::seconds((hour * 3600.0) as i64);
            let secs = ((5.0 + duration.sample(rng)) * 60.0) as i64;
            trips.push(Trip { start: pick.sample(rng), end: pick.sample(rng), t0, t1: t0 + Duration::seconds(secs) });
        }
    }
    trips.sort_by_key(|t| t.t0);
    trips
}

/// Station ids in popularity-rank order, shuffled relative to their numbering.
fn station_ids(rng: &mut ChaCha8Rng, prefix: &str, n: usize) -> Vec<String> {
    let mut numbers: Vec<usize> = (0..n).map(|i| 100 + 7 * i).collect();
    for i in (1..n).rev() {
        numbers.swap(i, rng.random_range(0..=i));
    }
    numbers.into_iter().map(|x| format!("{prefix}{x}")).collect()
}

fn write_file(path: &Path, body: &[u8]) -> Result<()> {
    let mut f = crate::formats::create(path)?;
    f.write_all(body).and_then(|_| f.flush()).map_err(|e| Error::io(path, e))
}

fn lyft_csv(rng: &mut ChaCha8Rng, spec: &CitySpec, ids: &[String], trips: &[Trip]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let coord = |k: usize| (spec.lat + 0.002 * (k % 9) as f64, spec.lng - 0.003 * (k / 9) as f64);
    w.write_record([
        "ride_id", "rideable_type", "started_at", "ended_at", "start_station_name", "start_station_id", "end_station_name",
        "end_station_id", "start_lat", "start_lng", "end_lat", "end_lng", "member_casual",
    ])
    .expect("in-memory write");
    for (i, t) in trips.iter().enumerate() {
        let ride_id = format!("{:016X}", rng.random::<u64>());
        let (mut from, mut to) = (ids[t.start].clone(), ids[t.end].clone());
        let (mut t0, t1) = (t.t0, t.t1);
        // A little real-world dirt: dockless parking (no station) and one reversed row.
        if i % 97 == 13 {
            to.clear();
        }
        if i % 211 == 5 {
            from.clear();
        }
        if i == 1000 {
            t0 = t1 + Duration::minutes(3);
        }
        let (a, b) = (coord(t.start), coord(t.end));
        w.write_record([
            ride_id,
            "classic_bike".into(),
            t0.format("%Y-%m-%d %H:%M:%S").to_string(),
            t1.format("%Y-%m-%d %H:%M:%S%.3f").to_string(),
            format!("Station {from}"),
            from,
            format!("Station {to}, Dock"),
            to,
            format!("{:.5}", a.0),
            format!("{:.5}", a.1),
            format!("{:.5}", b.0),
            format!("{:.5}", b.1),
            if i % 3 == 0 { "casual" } else { "member" }.into(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn santander_csv(ids: &[String], trips: &[Trip]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record([
        "Number", "Start date", "Start station number", "Start station", "End date", "End station number", "End station",
        "Bike number", "Bike model", "Total duration", "Total duration (ms)",
    ])
    .expect("in-memory write");
    for (i, t) in trips.iter().enumerate() {
        let ms = (t.t1 - t.t0).num_milliseconds();
        w.write_record([
            (130_000_000 + i).to_string(),
            t.t0.format("%Y-%m-%d %H:%M").to_string(),
            ids[t.start].clone(),
            format!("Road {}, Westminster", ids[t.start]),
            t.t1.format("%Y-%m-%d %H:%M").to_string(),
            ids[t.end].clone(),
            format!("Square {}, Camden", ids[t.end]),
            (50_000 + i % 900).to_string(),
            "CLASSIC".into(),
            format!("{}m {}s", ms / 60_000, (ms / 1000) % 60),
            ms.to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Readings every five minutes, written in UTC. Availability starts high
/// enough that it never hits zero.
fn snapshot_csv(spec: &CitySpec, ids: &[String], trips: &[Trip], opts: &SynthOptions) -> Result<Vec<u8>> {
    let tz: Tz = spec.timezone.parse().map_err(|_| Error::invalid("bad synthetic timezone"))?;
    let step = 5i64;
    let start = opts.start.and_hms_opt(0, 0, 0).expect("midnight");
    let slots = i64::from(opts.days) * 1440 / step;
    // delta[station][slot]: net change attributed to the reading closing that slot.
    let mut delta = vec![vec![0i64; slots as usize + 1]; ids.len()];
    for t in trips {
        for (station, at, sign) in [(t.start, t.t0, -1i64), (t.end, t.t1, 1)] {
            let slot = ((at - start).num_minutes() / step + 1) as usize;
            if slot <= slots as usize {
                delta[station][slot] += sign;
            }
        }
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(crate::formats::snapshots::COLUMNS).expect("in-memory write");
    let mut level = vec![400i64; ids.len()];
    for slot in 0..=slots {
        let local = start + Duration::minutes(slot * step);
        let utc = tz.from_local_datetime(&local).single().ok_or_else(|| Error::invalid("ambiguous local time"))?.with_timezone(&Utc);
        for (s, id) in ids.iter().enumerate() {
            level[s] += delta[s][slot as usize];
            w.write_record([id.clone(), utc.format("%Y-%m-%dT%H:%M:%SZ").to_string(), level[s].max(0).to_string()])
                .expect("in-memory write");
        }
    }
    Ok(w.into_inner().expect("in-memory flush"))
}

/// Writes `data/<city>/...` and `config.json` under `dir`; returns the config path.
pub fn write_fixture(dir: &Path, opts: &SynthOptions) -> Result<PathBuf> {
    let end = opts.start + Duration::days(i64::from(opts.days) - 1);
    let mut cities = Vec::new();
    for (i, spec) in CITIES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(i as u64);
        let stations = match spec.feed {
            Feed::Snapshots => opts.stations / 2,
            _ => opts.stations,
        };
        let prefix = match spec.feed {
            Feed::Santander => "00".to_string(),
            _ => format!("{}-", spec.id.to_ascii_uppercase()),
        };
        let ids = station_ids(&mut rng, &prefix, stations);
        let trips = simulate_trips(&mut rng, spec, opts, stations);
        let data = dir.join("data").join(spec.id);
        let mut city = json!({"id": spec.id, "timezone": spec.timezone, "input": format!("data/{}/*.csv", spec.id),
                              "period": {"start": opts.start, "end": end}});
        match spec.feed {
            Feed::Lyft(schema) => {
                // Two monthly-style files to exercise globbing.
                let half = trips.partition_point(|t| t.t0 < opts.start.and_hms_opt(0, 0, 0).expect("midnight") + Duration::days(7));
                write_file(&data.join("trips_a.csv"), &lyft_csv(&mut rng, spec, &ids, &trips[..half]))?;
                write_file(&data.join("trips_b.csv"), &lyft_csv(&mut rng, spec, &ids, &trips[half..]))?;
                city["schema"] = json!(schema);
            }
            Feed::Santander => {
                write_file(&data.join("journeys.csv"), &santander_csv(&ids, &trips))?;
                city["schema"] = json!("santander");
            }
            Feed::Snapshots => {
                write_file(&data.join("station_status.csv"), &snapshot_csv(spec, &ids, &trips, opts)?)?;
                city["snapshot"] = json!(true);
            }
        }
        cities.push(city);
    }
    let config = json!({
        "cities": cities,
        "bin_width": 60,
        "direction": "rental",
        "top_k_edges": 50,
        "seed": 42,
        "epsilon": 1e-9,
        "output_dir": "out",
    });
    let path = dir.join("config.json");
    let text = serde_json::to_string_pretty(&config).map_err(|e| Error::json(&path, e))?;
    write_file(&path, format!("{text}\n").as_bytes())?;
    Ok(path)
}
