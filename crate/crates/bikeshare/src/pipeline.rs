//! Full pipeline over a config: per-city stages (in parallel across cities),
//! the cross-city network, plot data, and a manifest.
//!
//! Output layout under the output directory:
//!
//! ```text
//! <city>/events.csv summary.json ingest_report.json distributions.csv
//!        jsd_matrix.csv jsd_matrix.json rank_{weekday,weekend}.csv
//!        fit_{weekday,weekend}.json correspondence.csv model.json
//! network/nodes.csv edges.csv network.json
//! plots/fig{1,2,4,5}_<city>.csv fig3.csv
//! manifest.json
//! ```

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CityConfig, LoadedConfig};
use crate::error::{Error, Result};
use crate::plot::{emit_plot_data, Figure};
use crate::stages::{self, IngestOptions, NetworkOptions, Source};

pub const MANIFEST: &str = "manifest.json";
pub const PLOTS_DIR: &str = "plots";
pub const NETWORK_STAGE: &str = "jsd_network";
pub const CITY_STAGES: [&str; 5] = ["ingest", "distributions", "jsd_matrix", "rank_fit", "rank_model"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Skipped,
    Failed,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputEntry {
    pub city: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: String,
    /// City id, or `all` for cross-city stages.
    pub city: String,
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub network_seed: u64,
    pub inputs: Vec<InputEntry>,
    pub stages: Vec<StageEntry>,
    pub plots: Vec<FileDigest>,
    pub complete: bool,
}

impl Manifest {
    pub fn stage(&self, stage: &str, city: &str) -> Option<&StageEntry> {
        self.stages.iter().find(|s| s.stage == stage && s.city == city)
    }
}

fn rel_string(root: &Path, p: &Path) -> String {
    let r = p.strip_prefix(root).unwrap_or(p);
    r.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

fn digests(root: &Path, files: &[PathBuf]) -> Result<Vec<FileDigest>> {
    files
        .iter()
        .map(|f| Ok(FileDigest { path: rel_string(root, f), sha256: stages::file_digest(f)? }))
        .collect()
}

struct Ctx<'a> {
    cfg: &'a LoadedConfig,
    out: PathBuf,
}

impl Ctx<'_> {
    fn city_dir(&self, city: &CityConfig) -> PathBuf {
        self.out.join(&city.id)
    }

    fn entry(&self, stage: &str, city: &str, result: Result<Option<Vec<PathBuf>>>) -> (StageEntry, Option<Error>) {
        let outcome = result.and_then(|files| files.map(|f| digests(&self.out, &f)).transpose());
        match outcome {
            Ok(Some(outputs)) => (StageEntry { stage: stage.into(), city: city.into(), status: StageStatus::Ok, detail: None, outputs }, None),
            Ok(None) => (
                StageEntry {
                    stage: stage.into(),
                    city: city.into(),
                    status: StageStatus::Skipped,
                    detail: Some("rank model disabled for this city".into()),
                    outputs: vec![],
                },
                None,
            ),
            Err(e) => {
                log::error!("stage {stage} failed for {city}: {e}");
                (
                    StageEntry { stage: stage.into(), city: city.into(), status: StageStatus::Failed, detail: Some(e.to_string()), outputs: vec![] },
                    Some(Error::Stage { stage: stage.into(), city: city.into(), source: Box::new(e) }),
                )
            }
        }
    }

    fn run_stage(&self, stage: &str, city: &CityConfig) -> Result<Option<Vec<PathBuf>>> {
        let c = &self.cfg.config;
        let dir = self.city_dir(city);
        let cal = city.period.calendar()?;
        log::info!("{}: {stage}", city.id);
        match stage {
            "ingest" => {
                let source = match self.cfg.schema(city)? {
                    Some(schema) => Source::Trips(schema),
                    None => Source::Snapshots(city.tz()?),
                };
                let opts = IngestOptions { malformed_threshold: c.malformed_threshold, max_gap: c.max_gap };
                let mut outcome = stages::ingest_files(&self.cfg.inputs(city)?, &source, opts, Some(&cal))?;
                // Report paths relative to the config so outputs do not depend on where the inputs live.
                for f in &mut outcome.report.files {
                    f.path = rel_string(&self.cfg.base_dir, Path::new(&f.path));
                }
                Ok(Some(stages::write_ingest(&dir, &city.id, &outcome, &cal)?.1))
            }
            "distributions" => {
                let out = dir.join(stages::DISTRIBUTIONS);
                stages::distributions_stage(&dir.join(stages::EVENTS), &city.id, c.bin_width, &out)?;
                Ok(Some(vec![out]))
            }
            "jsd_matrix" => {
                let files = [dir.join(stages::JSD_CSV), dir.join(stages::JSD_JSON)];
                stages::jsd_matrix_stage(&dir.join(stages::DISTRIBUTIONS), c.direction, &files[0], &files[1])?;
                Ok(Some(files.to_vec()))
            }
            "rank_fit" => Ok(Some(stages::rank_fit_stage(&dir.join(stages::EVENTS), &cal, &dir)?.1)),
            "rank_model" => {
                if !city.fits_rank_model() {
                    return Ok(None);
                }
                let wd = dir.join(stages::rank_file(bikeshare_core::calendar::DayClass::Weekday));
                let we = dir.join(stages::rank_file(bikeshare_core::calendar::DayClass::Weekend));
                Ok(Some(stages::rank_model_stage(&wd, &we, &dir)?.1))
            }
            other => unreachable!("unknown stage {other}"),
        }
    }

    /// Runs the city's stages in order; after a failure the rest are not run.
    fn run_city(&self, city: &CityConfig) -> (Vec<StageEntry>, Option<Error>) {
        let mut entries = Vec::new();
        let mut failure = None;
        for stage in CITY_STAGES {
            if failure.is_some() {
                entries.push(StageEntry { stage: stage.into(), city: city.id.clone(), status: StageStatus::NotRun, detail: None, outputs: vec![] });
                continue;
            }
            let (entry, err) = self.entry(stage, &city.id, self.run_stage(stage, city));
            entries.push(entry);
            failure = err;
        }
        (entries, failure)
    }
}

/// Runs every stage and writes the manifest, also when a stage fails; the
/// first failure is then returned after the manifest is on disk.
pub fn run_pipeline(cfg: &LoadedConfig, output_dir: Option<&Path>) -> Result<Manifest> {
    let out = output_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir());
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let ctx = Ctx { cfg, out: out.clone() };
    let c = &cfg.config;

    let mut inputs = Vec::new();
    for city in &c.cities {
        let files = cfg.inputs(city)?;
        let hashed: Vec<InputEntry> = files
            .par_iter()
            .map(|f| Ok(InputEntry { city: city.id.clone(), path: rel_string(&cfg.base_dir, f), sha256: stages::file_digest(f)? }))
            .collect::<Result<_>>()?;
        inputs.extend(hashed);
    }

    let per_city: Vec<(Vec<StageEntry>, Option<Error>)> = c.cities.par_iter().map(|city| ctx.run_city(city)).collect();
    let mut stages_out = Vec::new();
    let mut failures = Vec::new();
    for (entries, err) in per_city {
        stages_out.extend(entries);
        failures.extend(err);
    }

    let network_seed = stages::derive_seed(c.seed, NETWORK_STAGE);
    let net_dir = out.join(stages::NETWORK_DIR);
    if failures.is_empty() {
        let dists: Vec<PathBuf> = c.cities.iter().map(|city| ctx.city_dir(city).join(stages::DISTRIBUTIONS)).collect();
        let opts = NetworkOptions { direction: c.direction, epsilon: c.epsilon, seed: network_seed, resolution: c.resolution, top_k: c.top_k_edges };
        log::info!("all: {NETWORK_STAGE}");
        let result = stages::network_stage(&dists, opts, &net_dir).map(|(_, files)| Some(files));
        let (entry, err) = ctx.entry(NETWORK_STAGE, "all", result);
        stages_out.push(entry);
        failures.extend(err);
    } else {
        stages_out.push(StageEntry { stage: NETWORK_STAGE.into(), city: "all".into(), status: StageStatus::NotRun, detail: None, outputs: vec![] });
    }

    let mut plots = Vec::new();
    if failures.is_empty() {
        match emit_plots(&ctx, &stages_out) {
            Ok(files) => plots = digests(&out, &files)?,
            Err(e) => failures.push(Error::Stage { stage: "plot_data".into(), city: "all".into(), source: Box::new(e) }),
        }
    }

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: cfg.hash.clone(),
        seed: c.seed,
        network_seed,
        inputs,
        stages: stages_out,
        plots,
        complete: failures.is_empty(),
    };
    crate::formats::write_json(&out.join(MANIFEST), &manifest)?;
    match failures.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

fn emit_plots(ctx: &Ctx, stages_done: &[StageEntry]) -> Result<Vec<PathBuf>> {
    let plots = ctx.out.join(PLOTS_DIR);
    let ok = |stage: &str, city: &str| stages_done.iter().any(|s| s.stage == stage && s.city == city && s.status == StageStatus::Ok);
    let mut files = Vec::new();
    for city in &ctx.cfg.config.cities {
        let dir = ctx.city_dir(city);
        let mut figs = vec![Figure::Fig1, Figure::Fig2, Figure::Fig4];
        if ok("rank_model", &city.id) {
            figs.push(Figure::Fig5);
        }
        for fig in figs {
            let out = plots.join(format!("{fig}_{}.csv", city.id));
            emit_plot_data(&dir, fig, &out)?;
            files.push(out);
        }
    }
    let out = plots.join(format!("{}.csv", Figure::Fig3));
    emit_plot_data(&ctx.out.join(stages::NETWORK_DIR), Figure::Fig3, &out)?;
    files.push(out);
    Ok(files)
}
