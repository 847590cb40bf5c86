//! One function per pipeline stage. Each reads only the documented files of
//! earlier stages and writes its own, so stages can run in separate
//! processes or directories.

use std::path::{Path, PathBuf};

use bikeshare_core::calendar::{Calendar, Day, DayClass};
use bikeshare_core::divergence::jsd_day_matrix;
use bikeshare_core::ingest::{
    snapshots_to_events, summarize, trips_to_events, DatasetSummary, EventAccumulator, UsageEvent,
};
use bikeshare_core::jsdnet::{build_network, detect_communities};
use bikeshare_core::rankdist::{fit_rank_distribution, rank_stations, RankFit};
use bikeshare_core::rankmodel::{fit_rank_model, rank_correspondence, RankModelFit};
use bikeshare_core::timeseries::{distribution_set, DayDistribution, Direction};
use chrono_tz::Tz;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::formats::network::{write_network, NetworkBundle};
use crate::formats::snapshots::{normalize_snapshots, parse_snapshot_file};
use crate::formats::trips::parse_trip_file;
use crate::formats::{distributions, events, matrix, ranks, ParseReport};
use crate::schema::TripSchema;

pub const EVENTS: &str = "events.csv";
pub const SUMMARY: &str = "summary.json";
pub const INGEST_REPORT: &str = "ingest_report.json";
pub const DISTRIBUTIONS: &str = "distributions.csv";
pub const JSD_CSV: &str = "jsd_matrix.csv";
pub const JSD_JSON: &str = "jsd_matrix.json";
pub const CORRESPONDENCE: &str = "correspondence.csv";
pub const MODEL: &str = "model.json";
pub const NETWORK_DIR: &str = "network";

pub fn rank_file(class: DayClass) -> String {
    format!("rank_{class}.csv")
}

pub fn fit_file(class: DayClass) -> String {
    format!("fit_{class}.json")
}

/// Stage sub-seed: the first eight bytes (little endian) of
/// `SHA-256(master.to_le_bytes() || stage)`.
pub fn derive_seed(master: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone)]
pub enum Source {
    Trips(TripSchema),
    /// Snapshot timestamps with offsets convert to this zone.
    Snapshots(Tz),
}

#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    pub malformed_threshold: f64,
    pub max_gap: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub files: Vec<ParseReport>,
    /// Trips, or snapshot readings after de-duplication.
    pub records: u64,
    pub duplicate_snapshots: u64,
    pub snapshot_gaps: u64,
    /// Events dated outside the analysis period, dropped.
    pub out_of_period_events: u64,
    pub events: u64,
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub events: Vec<UsageEvent>,
    pub report: IngestReport,
}

/// Parses every file (in parallel), merges deterministically and keeps the
/// events dated inside `period` when one is given.
pub fn ingest_files(files: &[PathBuf], source: &Source, opts: IngestOptions, period: Option<&Calendar>) -> Result<IngestOutcome> {
    let mut report = IngestReport::default();
    let mut events = match source {
        Source::Trips(schema) => {
            let parsed: Vec<_> = files
                .par_iter()
                .map(|f| parse_trip_file(f, schema, opts.malformed_threshold))
                .collect::<Result<_>>()?;
            let mut acc = EventAccumulator::new();
            for p in parsed {
                report.records += p.records.len() as u64;
                acc.extend_events(&trips_to_events(&p.records));
                report.files.push(p.report);
            }
            acc.finish()
        }
        Source::Snapshots(tz) => {
            let parsed: Vec<_> = files
                .par_iter()
                .map(|f| parse_snapshot_file(f, *tz, opts.malformed_threshold))
                .collect::<Result<_>>()?;
            let mut all = Vec::new();
            for p in parsed {
                all.extend(p.snapshots);
                report.files.push(p.report);
            }
            let (snaps, dropped) = normalize_snapshots(all);
            report.records = snaps.len() as u64;
            report.duplicate_snapshots = dropped as u64;
            let (events, gaps) = snapshots_to_events(&snaps, opts.max_gap)?;
            report.snapshot_gaps = gaps.count() as u64;
            events
        }
    };
    if let Some(cal) = period {
        let before = events.len();
        events.retain(|e| cal.contains(e.date()));
        report.out_of_period_events = (before - events.len()) as u64;
    }
    report.events = events.len() as u64;
    Ok(IngestOutcome { events, report })
}

/// The period covering all event dates, or `None` for no events.
pub fn event_span(events: &[UsageEvent]) -> Option<Calendar> {
    let first = events.first()?.date();
    let last = events.last()?.date();
    Calendar::new(first, last).ok()
}

/// Writes `events.csv`, `summary.json` and `ingest_report.json`.
pub fn write_ingest(dir: &Path, city: &str, outcome: &IngestOutcome, calendar: &Calendar) -> Result<(DatasetSummary, Vec<PathBuf>)> {
    let paths = [dir.join(EVENTS), dir.join(SUMMARY), dir.join(INGEST_REPORT)];
    events::write_events(&paths[0], &outcome.events)?;
    let summary = summarize(city, &outcome.events, calendar)?;
    crate::formats::write_json(&paths[1], &summary)?;
    crate::formats::write_json(&paths[2], &outcome.report)?;
    Ok((summary, paths.to_vec()))
}

/// `events.csv` -> `distributions.csv`.
pub fn distributions_stage(events_path: &Path, city: &str, bin_width: u32, out: &Path) -> Result<()> {
    let evs = events::read_events(events_path)?;
    let set = distribution_set(&evs, city, bin_width)?;
    distributions::write_distributions(out, &set)
}

/// The seven per-day distributions of one direction from `distributions.csv`.
pub fn load_week(dist_path: &Path, direction: Direction) -> Result<(String, Vec<DayDistribution>)> {
    let set = distributions::read_distributions(dist_path)?;
    let week = set.week_of(direction);
    Ok((set.city, week))
}

/// `distributions.csv` -> `jsd_matrix.csv`, `jsd_matrix.json`.
pub fn jsd_matrix_stage(dist_path: &Path, direction: Direction, out_csv: &Path, out_json: &Path) -> Result<bikeshare_core::divergence::JsdMatrix> {
    let (_, week) = load_week(dist_path, direction)?;
    let m = jsd_day_matrix(&week.iter().collect::<Vec<_>>())?;
    matrix::write_matrix_csv(out_csv, &m)?;
    matrix::write_matrix_json(out_json, &m)?;
    Ok(m)
}

#[derive(Debug, Clone, Copy)]
pub struct NetworkOptions {
    pub direction: Direction,
    pub epsilon: f64,
    pub seed: u64,
    pub resolution: f64,
    pub top_k: usize,
}

/// Distribution files of several cities -> `nodes.csv`, `edges.csv`,
/// `network.json`. Nodes are `{city}-{day}`, in input order then Mon..Sun.
/// `opts.seed` is used as given; callers derive it.
pub fn network_stage(dist_paths: &[PathBuf], opts: NetworkOptions, out_dir: &Path) -> Result<(NetworkBundle, Vec<PathBuf>)> {
    let mut labelled = Vec::new();
    for p in dist_paths {
        let (city, week) = load_week(p, opts.direction)?;
        for (day, d) in Day::ALL.iter().zip(week) {
            labelled.push((format!("{city}-{day}"), d));
        }
    }
    let nodes: Vec<(String, &DayDistribution)> = labelled.iter().map(|(l, d)| (l.clone(), d)).collect();
    let mut net = build_network(&nodes, opts.epsilon)?;
    let partition = detect_communities(&mut net, opts.seed, opts.resolution)?;
    let bundle = NetworkBundle::new(&net, &partition, opts.top_k, opts.seed, opts.resolution, opts.epsilon);
    let files = write_network(out_dir, &bundle)?;
    Ok((bundle, files))
}

/// `events.csv` -> `rank_{class}.csv` and `fit_{class}.json` for both classes.
pub fn rank_fit_stage(events_path: &Path, calendar: &Calendar, out_dir: &Path) -> Result<(Vec<RankFit>, Vec<PathBuf>)> {
    let evs = events::read_events(events_path)?;
    let mut fits = Vec::new();
    let mut files = Vec::new();
    for class in [DayClass::Weekday, DayClass::Weekend] {
        let dist = rank_stations(&evs, class, calendar)?;
        let rank_path = out_dir.join(rank_file(class));
        ranks::write_ranks(&rank_path, &dist)?;
        let fit = fit_rank_distribution(&dist, None)?;
        let fit_path = out_dir.join(fit_file(class));
        ranks::write_fit(&fit_path, &fit)?;
        fits.push(fit);
        files.extend([rank_path, fit_path]);
    }
    Ok((fits, files))
}

/// Rank CSVs -> `correspondence.csv`, `model.json`.
pub fn rank_model_stage(weekday: &Path, weekend: &Path, out_dir: &Path) -> Result<(RankModelFit, Vec<PathBuf>)> {
    let wd = ranks::read_ranks(weekday, DayClass::Weekday)?;
    let we = ranks::read_ranks(weekend, DayClass::Weekend)?;
    let corr = rank_correspondence(&wd, &we)?;
    let corr_path = out_dir.join(CORRESPONDENCE);
    ranks::write_correspondence(&corr_path, &corr)?;
    let fit = fit_rank_model(&corr, None)?;
    let model_path = out_dir.join(MODEL);
    ranks::write_model(&model_path, &fit)?;
    Ok((fit, vec![corr_path, model_path]))
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut f = crate::formats::open(path)?;
    let mut h = Sha256::new();
    std::io::copy(&mut f, &mut h).map_err(|e| Error::io(path, e))?;
    Ok(crate::config::hex(&h.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sub_seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(42, "jsd_network"), derive_seed(42, "jsd_network"));
        assert_ne!(derive_seed(42, "jsd_network"), derive_seed(42, "simulate_model"));
        assert_ne!(derive_seed(42, "jsd_network"), derive_seed(43, "jsd_network"));
    }

    #[test]
    fn oracle_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        std::fs::write(&p, "abc").unwrap();
        assert_eq!(file_digest(&p).unwrap(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
