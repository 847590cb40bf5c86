//! Command-line front end. Every subcommand maps onto one stage function;
//! `run` drives the whole pipeline from a config file.

use std::path::{Path, PathBuf};

use bikeshare_core::calendar::{Calendar, DayClass};
use bikeshare_core::rankdist::{fit_rank_distribution, rank_stations, RankParams};
use bikeshare_core::rankmodel::{
    fit_rank_model, rank_correspondence, simulate_range, validate_simulation, ModelParams, SimulationParams,
    TrajectoryStats,
};
use bikeshare_core::timeseries::Direction;
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{CityConfig, LoadedConfig, PipelineConfig, DEFAULT_SEED, RANK_MODEL_EXCLUDED};
use crate::error::{Error, Result};
use crate::formats::{self, events, expand_glob, matrix, ranks, DEFAULT_MALFORMED_THRESHOLD};
use crate::pipeline::{run_pipeline, StageStatus};
use crate::plot::{emit_plot_data, Figure};
use crate::schema::TripSchema;
use crate::stages::{self, derive_seed, IngestOptions, NetworkOptions, Source};
use crate::synth::{write_fixture, SynthOptions};

/// Sub-seed key of the standalone Monte Carlo command.
pub const SIMULATE_STAGE: &str = "simulate_model";

/// Trials per parallel chunk; the merge is exact so this only affects speed.
const SIM_CHUNK: u64 = 4096;

#[derive(Debug, Parser)]
#[command(name = "bikeshare", version, about = "Bike-sharing usage analysis")]
pub struct Cli {
    /// Pipeline config (JSON). Required by `run`; other commands read defaults from it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; stage seeds are derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Raw trips or snapshots -> canonical event CSV (plus summary and parse report).
    Ingest(IngestArgs),
    /// Event CSV -> per-day usage distributions.
    Distributions(DistributionsArgs),
    /// Distributions -> 7x7 day-of-week JSD matrix.
    JsdMatrix(JsdMatrixArgs),
    /// Distributions of several cities -> JSD network with communities.
    JsdNetwork(JsdNetworkArgs),
    /// Event CSV -> station rank distribution and truncated power-law fit.
    RankFit(RankFitArgs),
    /// Weekday and weekend rank CSVs -> rank correspondence.
    RankCompare(RankCompareArgs),
    /// Rank correspondence -> saturation model fit.
    ModelFit(ModelFitArgs),
    /// Monte Carlo of the rank occupancy process.
    SimulateModel(SimulateArgs),
    /// Full pipeline from `--config`.
    Run,
    /// Stage output -> tidy CSV for one figure.
    PlotData(PlotDataArgs),
    /// Writes a deterministic six-city synthetic fixture and its config.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub city: String,
    /// Built-in schema id or descriptor file (trip inputs).
    #[arg(long)]
    pub schema: Option<String>,
    /// Inputs are station snapshots.
    #[arg(long)]
    pub snapshot: bool,
    #[arg(long)]
    pub timezone: Option<String>,
    #[arg(long)]
    pub input: Option<String>,
    #[arg(long)]
    pub max_gap: Option<i64>,
    #[arg(long)]
    pub malformed_threshold: Option<f64>,
    /// First day kept; with `--end`, events outside are dropped.
    #[arg(long)]
    pub start: Option<NaiveDate>,
    #[arg(long)]
    pub end: Option<NaiveDate>,
}

#[derive(Debug, Args)]
pub struct DistributionsArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub city: String,
    /// Bin width in minutes.
    #[arg(long = "bin")]
    pub bin_width: Option<u32>,
}

#[derive(Debug, Args)]
pub struct JsdMatrixArgs {
    #[arg(long)]
    pub dist: PathBuf,
    /// Checked against the city recorded in the distribution file.
    #[arg(long)]
    pub city: Option<String>,
    #[arg(long)]
    pub direction: Option<Direction>,
}

#[derive(Debug, Args)]
pub struct JsdNetworkArgs {
    /// Directory of distribution CSVs (`*.csv` or `*/distributions.csv`).
    #[arg(long, conflicts_with = "dist")]
    pub dist_dir: Option<PathBuf>,
    #[arg(long)]
    pub dist: Vec<PathBuf>,
    #[arg(long = "top")]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub resolution: Option<f64>,
    #[arg(long)]
    pub direction: Option<Direction>,
}

#[derive(Debug, Args)]
pub struct RankFitArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long, default_value = "weekday")]
    pub day_class: DayClass,
    /// Rank CSV path; defaults to `rank_<class>.csv` beside the fit.
    #[arg(long)]
    pub ranks: Option<PathBuf>,
    #[arg(long)]
    pub start: Option<NaiveDate>,
    #[arg(long)]
    pub end: Option<NaiveDate>,
    #[arg(long, requires_all = ["beta0", "gamma0"])]
    pub alpha0: Option<f64>,
    #[arg(long, requires_all = ["alpha0", "gamma0"])]
    pub beta0: Option<f64>,
    #[arg(long, requires_all = ["alpha0", "beta0"])]
    pub gamma0: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RankCompareArgs {
    #[arg(long)]
    pub weekday: PathBuf,
    #[arg(long)]
    pub weekend: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelFitArgs {
    #[arg(long)]
    pub correspondence: PathBuf,
    /// City the data belongs to; cities excluded from the model are refused.
    #[arg(long)]
    pub city: Option<String>,
    /// Fit even for an excluded city.
    #[arg(long)]
    pub force: bool,
    #[arg(long, requires = "b0")]
    pub a0: Option<f64>,
    #[arg(long, requires = "a0")]
    pub b0: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub a: f64,
    /// Maximum weekend rank.
    #[arg(long = "m")]
    pub m_max: usize,
    /// Number of weekday ranks.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub s1: u32,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
}

#[derive(Debug, Args)]
pub struct PlotDataArgs {
    /// Stage output file, or the directory holding it.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub figure: Figure,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 14)]
    pub days: u32,
    #[arg(long)]
    pub start: Option<NaiveDate>,
}

struct Env {
    config: Option<LoadedConfig>,
    seed: u64,
    /// `--seed` as given, overriding the config seed.
    seed_override: Option<u64>,
    out: Option<PathBuf>,
}

impl Env {
    fn pipeline(&self) -> Option<&PipelineConfig> {
        self.config.as_ref().map(|c| &c.config)
    }

    fn city(&self, id: &str) -> Option<&CityConfig> {
        self.pipeline()?.cities.iter().find(|c| c.id == id)
    }

    fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::invalid(format!("input {} does not exist", path.display())))
    }
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().map(|p| p.join(name)).unwrap_or_else(|| PathBuf::from(name))
}

fn period(start: Option<NaiveDate>, end: Option<NaiveDate>) -> Result<Option<Calendar>> {
    match (start, end) {
        (Some(s), Some(e)) => Calendar::new(s, e).map(Some).map_err(|e| Error::invalid(format!("period: {e}"))),
        (Some(s), None) => Ok(Some(Calendar::spanning(s, Calendar::DEFAULT_DAYS))),
        (None, Some(_)) => Err(Error::invalid("--end needs --start")),
        (None, None) => Ok(None),
    }
}

fn ingest(env: &Env, args: IngestArgs) -> Result<()> {
    let city_cfg = env.city(&args.city);
    let base = env.config.as_ref().map(|c| c.base_dir.clone()).unwrap_or_default();
    let pipeline = env.pipeline();

    let input = match (&args.input, city_cfg) {
        (Some(glob), _) => glob.clone(),
        (None, Some(c)) => env.config.as_ref().expect("city implies config").input_glob(c),
        (None, None) => return Err(Error::invalid("--input is required without a matching --config city")),
    };
    let files = expand_glob(&input)?;
    let timezone = args.timezone.clone().or_else(|| city_cfg.map(|c| c.timezone.clone())).unwrap_or_else(|| "UTC".into());
    let tz = timezone.parse().map_err(|_| Error::invalid(format!("unknown timezone {timezone:?}")))?;
    let schema = args.schema.clone().or_else(|| city_cfg.and_then(|c| c.schema.clone()));
    let snapshot = args.snapshot || city_cfg.is_some_and(|c| c.snapshot);
    let source = match (schema, snapshot) {
        (Some(s), false) => Source::Trips(TripSchema::resolve(&s, &base)?),
        (None, true) => Source::Snapshots(tz),
        (Some(_), true) => return Err(Error::invalid("give either --schema or --snapshot, not both")),
        (None, false) => return Err(Error::invalid("--schema or --snapshot is required")),
    };
    let opts = IngestOptions {
        malformed_threshold: args
            .malformed_threshold
            .or(pipeline.map(|p| p.malformed_threshold))
            .unwrap_or(DEFAULT_MALFORMED_THRESHOLD),
        max_gap: args.max_gap.or(pipeline.map(|p| p.max_gap)).unwrap_or(bikeshare_core::ingest::DEFAULT_MAX_GAP_MINUTES),
    };
    let configured = match city_cfg {
        Some(c) if args.start.is_none() => Some(c.period.calendar()?),
        _ => None,
    };
    let cal = configured.or(period(args.start, args.end)?);

    let outcome = stages::ingest_files(&files, &source, opts, cal.as_ref())?;
    let cal = match cal.or_else(|| stages::event_span(&outcome.events)) {
        Some(c) => c,
        None => return Err(Error::invalid("inputs contain no usage events")),
    };
    let out = env.out_or(stages::EVENTS);
    events::write_events(&out, &outcome.events)?;
    let summary = bikeshare_core::ingest::summarize(&args.city, &outcome.events, &cal)?;
    formats::write_json(&sibling(&out, stages::SUMMARY), &summary)?;
    formats::write_json(&sibling(&out, stages::INGEST_REPORT), &outcome.report)?;
    log::info!("{} events from {} records in {} files", outcome.report.events, outcome.report.records, files.len());
    println!("{}", out.display());
    Ok(())
}

fn distributions(env: &Env, args: DistributionsArgs) -> Result<()> {
    require_file(&args.events)?;
    let bin = args.bin_width.or(env.pipeline().map(|p| p.bin_width)).unwrap_or(bikeshare_core::timeseries::DEFAULT_BIN_WIDTH);
    bikeshare_core::timeseries::bin_count(bin).map_err(|e| Error::invalid(e.to_string()))?;
    let out = env.out_or(stages::DISTRIBUTIONS);
    stages::distributions_stage(&args.events, &args.city, bin, &out)?;
    println!("{}", out.display());
    Ok(())
}

fn direction(env: &Env, given: Option<Direction>) -> Direction {
    given.or(env.pipeline().map(|p| p.direction)).unwrap_or(Direction::Rental)
}

fn jsd_matrix(env: &Env, args: JsdMatrixArgs) -> Result<()> {
    require_file(&args.dist)?;
    if let Some(city) = &args.city {
        let (found, _) = stages::load_week(&args.dist, Direction::Rental)?;
        if &found != city {
            return Err(Error::invalid(format!("{} holds city {found}, not {city}", args.dist.display())));
        }
    }
    let out = env.out_or(stages::JSD_CSV);
    let m = stages::jsd_matrix_stage(&args.dist, direction(env, args.direction), &out, &out.with_extension("json"))?;
    print!("{}", matrix::render_table(&m));
    Ok(())
}

fn network_inputs(args: &JsdNetworkArgs) -> Result<Vec<PathBuf>> {
    let files = match &args.dist_dir {
        Some(dir) => {
            if !dir.is_dir() {
                return Err(Error::invalid(format!("{} is not a directory", dir.display())));
            }
            let flat = dir.join("*.csv").to_string_lossy().into_owned();
            let nested = dir.join("*").join(stages::DISTRIBUTIONS).to_string_lossy().into_owned();
            expand_glob(&flat).or_else(|_| expand_glob(&nested))?
        }
        None => args.dist.clone(),
    };
    if files.is_empty() {
        return Err(Error::invalid("give --dist-dir or at least one --dist"));
    }
    files.iter().try_for_each(|f| require_file(f))?;
    Ok(files)
}

fn jsd_network(env: &Env, args: JsdNetworkArgs) -> Result<()> {
    let files = network_inputs(&args)?;
    let p = env.pipeline();
    let opts = NetworkOptions {
        direction: direction(env, args.direction),
        epsilon: args.epsilon.or(p.map(|p| p.epsilon)).unwrap_or(bikeshare_core::jsdnet::DEFAULT_EPSILON),
        seed: derive_seed(env.seed, crate::pipeline::NETWORK_STAGE),
        resolution: args.resolution.or(p.map(|p| p.resolution)).unwrap_or(bikeshare_core::louvain::DEFAULT_RESOLUTION),
        top_k: args.top_k.or(p.map(|p| p.top_k_edges)).unwrap_or(bikeshare_core::jsdnet::DEFAULT_TOP_K),
    };
    if !(opts.epsilon > 0.0 && opts.epsilon.is_finite()) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let out = env.out_or(stages::NETWORK_DIR);
    let (bundle, written) = stages::network_stage(&files, opts, &out)?;
    println!("{} nodes, {} communities, modularity {:.4}", bundle.nodes.len(), bundle.communities, bundle.modularity);
    for f in written {
        println!("{}", f.display());
    }
    Ok(())
}

fn rank_fit(env: &Env, args: RankFitArgs) -> Result<()> {
    require_file(&args.events)?;
    let evs = events::read_events(&args.events)?;
    let cal = match period(args.start, args.end)?.or_else(|| stages::event_span(&evs)) {
        Some(c) => c,
        None => return Err(Error::invalid(format!("{} holds no events", args.events.display()))),
    };
    let out = env.out_or(&stages::fit_file(args.day_class));
    let dist = rank_stations(&evs, args.day_class, &cal)?;
    ranks::write_ranks(&args.ranks.clone().unwrap_or_else(|| sibling(&out, &stages::rank_file(args.day_class))), &dist)?;
    let init = match (args.alpha0, args.beta0, args.gamma0) {
        (Some(alpha), Some(beta), Some(gamma)) => Some(RankParams { alpha, beta, gamma }),
        _ => None,
    };
    let fit = fit_rank_distribution(&dist, init)?;
    ranks::write_fit(&out, &fit)?;
    println!(
        "{}: alpha {:.4} beta {:.4e} gamma {:.4} rmse_log {:.4} over {} ranks",
        args.day_class, fit.alpha, fit.beta, fit.gamma, fit.rmse_log, fit.n_ranks
    );
    Ok(())
}

fn rank_compare(env: &Env, args: RankCompareArgs) -> Result<()> {
    require_file(&args.weekday)?;
    require_file(&args.weekend)?;
    let wd = ranks::read_ranks(&args.weekday, DayClass::Weekday)?;
    let we = ranks::read_ranks(&args.weekend, DayClass::Weekend)?;
    let corr = rank_correspondence(&wd, &we)?;
    let out = env.out_or(stages::CORRESPONDENCE);
    ranks::write_correspondence(&out, &corr)?;
    println!("{} common stations, M_max {}", corr.pairs.len(), corr.m_max);
    Ok(())
}

fn model_fit(env: &Env, args: ModelFitArgs) -> Result<()> {
    require_file(&args.correspondence)?;
    if let Some(id) = &args.city {
        let enabled = match env.city(id) {
            Some(c) => c.fits_rank_model(),
            None => !RANK_MODEL_EXCLUDED.contains(&id.to_ascii_lowercase().as_str()),
        };
        if !enabled && !args.force {
            return Err(Error::invalid(format!("the rank model is disabled for {id}; pass --force to fit anyway")));
        }
    }
    let corr = ranks::read_correspondence(&args.correspondence)?;
    let init = args.a0.zip(args.b0).map(|(a, b)| ModelParams { a, b });
    let fit = fit_rank_model(&corr, init)?;
    let out = env.out_or(stages::MODEL);
    ranks::write_model(&out, &fit)?;
    println!("a {:.4} b {:.3} M_max {} rmse {:.3} ({:?})", fit.a, fit.b, fit.m_max, fit.rmse, fit.regime);
    Ok(())
}

/// Parallel Monte Carlo; chunks are merged in order with exact integer sums,
/// so the result is independent of the thread count.
pub fn simulate_parallel(params: &SimulationParams) -> Result<bikeshare_core::rankmodel::SimulationResult> {
    validate_simulation(params)?;
    let chunks: Vec<u64> = (0..params.trials.div_ceil(SIM_CHUNK)).collect();
    let partials: Vec<TrajectoryStats> = chunks
        .par_iter()
        .map(|&c| {
            let mut stats = TrajectoryStats::new(params.n);
            simulate_range(params, c * SIM_CHUNK..((c + 1) * SIM_CHUNK).min(params.trials), &mut stats);
            stats
        })
        .collect();
    let mut total = TrajectoryStats::new(params.n);
    for p in &partials {
        total.merge(p);
    }
    Ok(total.finish())
}

fn simulate(env: &Env, args: SimulateArgs) -> Result<()> {
    let params = SimulationParams {
        n: args.n,
        m_max: args.m_max,
        a: args.a,
        s1: args.s1,
        seed: derive_seed(env.seed, SIMULATE_STAGE),
        trials: args.trials,
    };
    validate_simulation(&params).map_err(|e| Error::invalid(e.to_string()))?;
    let sim = simulate_parallel(&params)?;
    let out = env.out_or("simulation.csv");
    ranks::write_simulation(&out, &sim)?;
    println!("{}", out.display());
    Ok(())
}

fn run(env: &Env) -> Result<()> {
    let Some(cfg) = &env.config else {
        return Err(Error::invalid("run needs --config"));
    };
    let mut cfg = cfg.clone();
    if let Some(seed) = env.seed_override {
        cfg.config.seed = seed;
        cfg.hash = cfg.config.hash();
    }
    let manifest = run_pipeline(&cfg, env.out.as_deref())?;
    for s in &manifest.stages {
        let status = match s.status {
            StageStatus::Ok => "ok",
            StageStatus::Skipped => "skipped",
            StageStatus::Failed => "FAILED",
            StageStatus::NotRun => "not run",
        };
        println!("{:<14} {:<10} {status}", s.stage, s.city);
    }
    Ok(())
}

fn plot_data(env: &Env, args: PlotDataArgs) -> Result<()> {
    let out = env.out_or(&format!("{}.csv", args.figure));
    let rows = emit_plot_data(&args.input, args.figure, &out)?;
    println!("{rows} rows -> {}", out.display());
    Ok(())
}

fn synth(env: &Env, args: SynthArgs) -> Result<()> {
    let mut opts = SynthOptions { days: args.days, ..SynthOptions::default() };
    if args.days < 7 {
        return Err(Error::invalid("--days must cover a full week"));
    }
    if let Some(s) = args.start {
        opts.start = s;
    }
    if let Some(seed) = env.seed_override {
        opts.seed = seed;
    }
    let dir = env.out_or("synthetic");
    let config = write_fixture(&dir, &opts)?;
    println!("{}", config.display());
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    let config = cli.config.as_deref().map(PipelineConfig::load).transpose()?;
    let seed = cli.seed.or(config.as_ref().map(|c| c.config.seed)).unwrap_or(DEFAULT_SEED);
    let env = Env { config, seed, seed_override: cli.seed, out: cli.out };
    match cli.command {
        Command::Ingest(a) => ingest(&env, a),
        Command::Distributions(a) => distributions(&env, a),
        Command::JsdMatrix(a) => jsd_matrix(&env, a),
        Command::JsdNetwork(a) => jsd_network(&env, a),
        Command::RankFit(a) => rank_fit(&env, a),
        Command::RankCompare(a) => rank_compare(&env, a),
        Command::ModelFit(a) => model_fit(&env, a),
        Command::SimulateModel(a) => simulate(&env, a),
        Command::Run => run(&env),
        Command::PlotData(a) => plot_data(&env, a),
        Command::Synth(a) => synth(&env, a),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> u8 {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
