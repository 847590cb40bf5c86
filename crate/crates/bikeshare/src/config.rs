//! Pipeline configuration (JSON). Relative paths resolve against the
//! directory holding the config file.

use std::path::{Path, PathBuf};

use bikeshare_core::calendar::Calendar;
use bikeshare_core::ingest::DEFAULT_MAX_GAP_MINUTES;
use bikeshare_core::jsdnet::{DEFAULT_EPSILON, DEFAULT_TOP_K};
use bikeshare_core::louvain::DEFAULT_RESOLUTION;
use bikeshare_core::timeseries::{bin_count, Direction, DEFAULT_BIN_WIDTH};
use chrono::NaiveDate;
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::formats::{expand_glob, DEFAULT_MALFORMED_THRESHOLD};
use crate::schema::TripSchema;

pub const DEFAULT_SEED: u64 = 42;

/// City ids whose rank correspondence is left unfitted unless forced.
pub const RANK_MODEL_EXCLUDED: [&str; 2] = ["lon", "london"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Period {
    pub start: NaiveDate,
    /// Inclusive. Defaults to 30 days from `start`.
    #[serde(default)]
    pub end: Option<NaiveDate>,
}

impl Period {
    pub fn calendar(&self) -> Result<Calendar> {
        match self.end {
            Some(end) => Calendar::new(self.start, end).map_err(|e| Error::invalid(format!("period: {e}"))),
            None => Ok(Calendar::spanning(self.start, Calendar::DEFAULT_DAYS)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CityConfig {
    /// Used in node labels and as the output subdirectory name.
    pub id: String,
    /// IANA zone name; snapshot timestamps with an offset convert to it.
    pub timezone: String,
    /// Built-in schema id or a descriptor path, for trip files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    /// Inputs are station snapshots instead of trips.
    #[serde(default)]
    pub snapshot: bool,
    /// Glob over raw input files.
    pub input: String,
    pub period: Period,
    /// Fit the rank correspondence model; defaults to true except for London.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_model: Option<bool>,
}

impl CityConfig {
    pub fn fits_rank_model(&self) -> bool {
        self.rank_model
            .unwrap_or_else(|| !RANK_MODEL_EXCLUDED.contains(&self.id.to_ascii_lowercase().as_str()))
    }

    pub fn tz(&self) -> Result<Tz> {
        self.timezone
            .parse()
            .map_err(|_| Error::invalid(format!("city {}: unknown timezone {:?}", self.id, self.timezone)))
    }
}

fn default_bin_width() -> u32 {
    DEFAULT_BIN_WIDTH
}
fn default_top_k() -> usize {
    DEFAULT_TOP_K
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_max_gap() -> i64 {
    DEFAULT_MAX_GAP_MINUTES
}
fn default_threshold() -> f64 {
    DEFAULT_MALFORMED_THRESHOLD
}
fn default_resolution() -> f64 {
    DEFAULT_RESOLUTION
}
fn default_direction() -> Direction {
    Direction::Rental
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub cities: Vec<CityConfig>,
    #[serde(default = "default_bin_width")]
    pub bin_width: u32,
    /// Direction of the distributions compared by JSD.
    #[serde(default = "default_direction")]
    pub direction: Direction,
    #[serde(default = "default_top_k")]
    pub top_k_edges: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    /// Minutes between snapshots beyond which no activity is inferred.
    #[serde(default = "default_max_gap")]
    pub max_gap: i64,
    /// Fraction of malformed rows tolerated per input file.
    #[serde(default = "default_threshold")]
    pub malformed_threshold: f64,
    /// Left out of the config hash so the same analysis written to another
    /// directory hashes the same.
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: PathBuf,
}

/// A validated config with its paths resolved.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub base_dir: PathBuf,
    /// Hex SHA-256 of the canonical serialisation.
    pub hash: String,
}

impl LoadedConfig {
    pub fn output_dir(&self) -> PathBuf {
        self.base_dir.join(&self.config.output_dir)
    }

    pub fn input_glob(&self, city: &CityConfig) -> String {
        self.base_dir.join(&city.input).to_string_lossy().into_owned()
    }

    pub fn inputs(&self, city: &CityConfig) -> Result<Vec<PathBuf>> {
        expand_glob(&self.input_glob(city))
    }

    pub fn schema(&self, city: &CityConfig) -> Result<Option<TripSchema>> {
        city.schema.as_deref().map(|s| TripSchema::resolve(s, &self.base_dir)).transpose()
    }

    /// Inputs relative to the config directory, for the manifest.
    pub fn relative<'a>(&self, path: &'a Path) -> &'a Path {
        path.strip_prefix(&self.base_dir).unwrap_or(path)
    }
}

impl PipelineConfig {
    /// Hex SHA-256 of the serialised config, `output_dir` excluded.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(serde_json::to_vec(self).expect("config serialises")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        let config = Self::from_json(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.validated(base_dir)
    }

    /// Checks every setting and referenced path, and fills defaulted period ends.
    pub fn validated(mut self, base_dir: PathBuf) -> Result<LoadedConfig> {
        if self.cities.is_empty() {
            return Err(Error::invalid("config lists no cities"));
        }
        bin_count(self.bin_width).map_err(|e| Error::invalid(e.to_string()))?;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::invalid("resolution must be positive"));
        }
        if self.max_gap < 1 {
            return Err(Error::invalid("max_gap must be at least 1 minute"));
        }
        if !(0.0..=1.0).contains(&self.malformed_threshold) {
            return Err(Error::invalid("malformed_threshold must lie in [0, 1]"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for city in &mut self.cities {
            let ok_id = !city.id.is_empty() && city.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !ok_id {
                return Err(Error::invalid(format!("city id {:?} must be non-empty [A-Za-z0-9_-]", city.id)));
            }
            if !seen.insert(city.id.clone()) {
                return Err(Error::invalid(format!("duplicate city id {:?}", city.id)));
            }
            city.tz()?;
            match (&city.schema, city.snapshot) {
                (Some(_), true) | (None, false) => {
                    return Err(Error::invalid(format!("city {}: give exactly one of schema or snapshot", city.id)))
                }
                (Some(s), false) => {
                    TripSchema::resolve(s, &base_dir)?;
                }
                (None, true) => {}
            }
            let cal = city.period.calendar()?;
            city.period.end = Some(cal.end());
        }
        let hash = self.hash();
        let loaded = LoadedConfig { config: self, base_dir, hash };
        for city in &loaded.config.cities {
            loaded.inputs(city).map_err(|e| Error::invalid(format!("city {}: {e}", city.id)))?;
        }
        Ok(loaded)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(dir: &Path, extra: &str) -> Result<LoadedConfig> {
        std::fs::write(dir.join("trips.csv"), "x").unwrap();
        let text = format!(
            r#"{{"cities": [{{"id": "ny", "timezone": "America/New_York", "schema": "citibike",
                 "input": "*.csv", "period": {{"start": "2023-10-02"}}}}]{extra}}}"#
        );
        PipelineConfig::from_json(&text)?.validated(dir.to_path_buf())
    }

    #[test]
    fn defaults_and_thirty_day_period() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path(), "").unwrap();
        let cfg = &c.config;
        assert_eq!((cfg.bin_width, cfg.top_k_edges, cfg.seed), (60, 50, 42));
        assert_eq!(cfg.direction, Direction::Rental);
        let cal = cfg.cities[0].period.calendar().unwrap();
        assert_eq!(cal.len_days(), 30);
        assert_eq!(cfg.cities[0].period.end, NaiveDate::from_ymd_opt(2023, 10, 31));
        assert!(cfg.cities[0].fits_rank_model());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let dir = tempfile::tempdir().unwrap();
        let a = config(dir.path(), r#", "output_dir": "a""#).unwrap();
        let b = config(dir.path(), r#", "output_dir": "b""#).unwrap();
        let c = config(dir.path(), r#", "seed": 7"#).unwrap();
        assert_eq!(a.hash, b.hash);
        assert_ne!(a.hash, c.hash);
        assert_eq!(a.hash.len(), 64);
    }

    #[test]
    fn validation_errors() {
        let dir = tempfile::tempdir().unwrap();
        for extra in [r#", "bin_width": 7"#, r#", "epsilon": 0"#, r#", "unknown": 1"#, r#", "malformed_threshold": 2"#] {
            assert!(matches!(config(dir.path(), extra), Err(Error::Invalid(_))), "{extra}");
        }
        let text = r#"{"cities": [{"id": "ny", "timezone": "UTC", "schema": "citibike",
                        "input": "missing/*.csv", "period": {"start": "2023-10-02"}}]}"#;
        let err = PipelineConfig::from_json(text).unwrap().validated(dir.path().to_path_buf()).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
    }

    #[test]
    fn london_excluded_by_default() {
        let mut c = CityConfig {
            id: "london".into(),
            timezone: "Europe/London".into(),
            schema: Some("santander".into()),
            snapshot: false,
            input: "x".into(),
            period: Period { start: NaiveDate::from_ymd_opt(2023, 10, 2).unwrap(), end: None },
            rank_model: None,
        };
        assert!(!c.fits_rank_model());
        c.rank_model = Some(true);
        assert!(c.fits_rank_model());
    }
}
