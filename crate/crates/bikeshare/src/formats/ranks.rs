//! Rank analysis artifacts: rank CSV, fit JSON, correspondence CSV, model
//! JSON and simulation CSV.

use std::collections::BTreeSet;
use std::path::Path;

use bikeshare_core::calendar::DayClass;
use bikeshare_core::ingest::StationId;
use bikeshare_core::lm::Termination;
use bikeshare_core::rankdist::{RankDistribution, RankFit};
use bikeshare_core::rankmodel::{ModelRegime, RankCorrespondence, RankModelFit, RankPair, SimulationResult};
use serde::{Deserialize, Serialize};

use super::{fmt_f64, parse_field};
use crate::error::{Error, Result};

pub const RANK_COLUMNS: [&str; 4] = ["rank", "station_id", "count", "proportion"];
pub const CORRESPONDENCE_COLUMNS: [&str; 3] = ["station_id", "weekday_rank", "weekend_rank"];
pub const SIMULATION_COLUMNS: [&str; 3] = ["k", "mean", "stderr"];

pub fn write_ranks(path: &Path, dist: &RankDistribution) -> Result<()> {
    let mut w = super::csv_writer(path)?;
    let err = |e| Error::csv(path, e);
    w.write_record(RANK_COLUMNS).map_err(err)?;
    for e in &dist.entries {
        w.write_record([e.rank.to_string(), e.station_id.to_string(), e.count.to_string(), fmt_f64(e.proportion)])
            .map_err(err)?;
    }
    super::flush(w, path)
}

/// Re-ranks the stored counts and requires the file to match that ranking.
pub fn read_ranks(path: &Path, day_class: DayClass) -> Result<RankDistribution> {
    let mut rdr = super::csv_reader(path)?;
    super::expect_header(&mut rdr, path, &RANK_COLUMNS)?;
    let mut rows: Vec<(usize, StationId, u64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((
            parse_field(path, line, "rank", &rec[0])?,
            StationId::new(&rec[1]),
            parse_field(path, line, "count", &rec[2])?,
        ));
    }
    let dist = RankDistribution::from_counts(day_class, rows.iter().map(|r| (r.1.clone(), r.2)))
        .map_err(|e| Error::format(path, e.to_string()))?;
    let consistent = dist.entries.len() == rows.len()
        && dist.entries.iter().zip(&rows).all(|(e, r)| e.rank == r.0 && e.station_id == r.1);
    if !consistent {
        return Err(Error::format(path, "ranks are not consecutive in count order"));
    }
    Ok(dist)
}

pub fn write_fit(path: &Path, fit: &RankFit) -> Result<()> {
    super::write_json(path, fit)
}

pub fn read_fit(path: &Path) -> Result<RankFit> {
    super::read_json(path)
}

pub fn write_correspondence(path: &Path, corr: &RankCorrespondence) -> Result<()> {
    let mut w = super::csv_writer(path)?;
    let err = |e| Error::csv(path, e);
    w.write_record(CORRESPONDENCE_COLUMNS).map_err(err)?;
    for p in &corr.pairs {
        w.write_record([p.station_id.to_string(), p.x.to_string(), p.y.to_string()]).map_err(err)?;
    }
    super::flush(w, path)
}

pub fn read_correspondence(path: &Path) -> Result<RankCorrespondence> {
    let mut rdr = super::csv_reader(path)?;
    super::expect_header(&mut rdr, path, &CORRESPONDENCE_COLUMNS)?;
    let mut pairs = Vec::new();
    let (mut xs, mut ys, mut ids) = (BTreeSet::new(), BTreeSet::new(), BTreeSet::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let pair = RankPair {
            station_id: StationId::new(&rec[0]),
            x: parse_field(path, line, "weekday_rank", &rec[1])?,
            y: parse_field(path, line, "weekend_rank", &rec[2])?,
        };
        if pair.x == 0 || pair.y == 0 || !xs.insert(pair.x) || !ys.insert(pair.y) || !ids.insert(pair.station_id.clone()) {
            return Err(Error::format(path, format!("line {line}: ranks must be positive and distinct, stations unique")));
        }
        pairs.push(pair);
    }
    if pairs.is_empty() {
        return Err(Error::format(path, "no pairs"));
    }
    Ok(RankCorrespondence {
        n: xs.last().copied().unwrap_or(0),
        m_max: ys.last().copied().unwrap_or(0),
        pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    a: f64,
    b: f64,
    #[serde(rename = "M_max")]
    m_max: f64,
    rmse: f64,
    n_pairs: usize,
    regime: ModelRegime,
    iterations: usize,
    termination: Termination,
}

pub fn write_model(path: &Path, fit: &RankModelFit) -> Result<()> {
    super::write_json(
        path,
        &ModelFile {
            a: fit.a,
            b: fit.b,
            m_max: fit.m_max,
            rmse: fit.rmse,
            n_pairs: fit.n_pairs,
            regime: fit.regime,
            iterations: fit.iterations,
            termination: fit.termination,
        },
    )
}

pub fn read_model(path: &Path) -> Result<RankModelFit> {
    let m: ModelFile = super::read_json(path)?;
    Ok(RankModelFit {
        a: m.a,
        b: m.b,
        m_max: m.m_max,
        rmse: m.rmse,
        n_pairs: m.n_pairs,
        regime: m.regime,
        iterations: m.iterations,
        termination: m.termination,
    })
}

pub fn write_simulation(path: &Path, sim: &SimulationResult) -> Result<()> {
    let mut w = super::csv_writer(path)?;
    let err = |e| Error::csv(path, e);
    w.write_record(SIMULATION_COLUMNS).map_err(err)?;
    for (k, (m, s)) in sim.mean.iter().zip(&sim.stderr).enumerate() {
        w.write_record([(k + 1).to_string(), fmt_f64(*m), fmt_f64(*s)]).map_err(err)?;
    }
    super::flush(w, path)
}
