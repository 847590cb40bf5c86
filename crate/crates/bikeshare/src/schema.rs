//! Per-city trip file descriptors. A descriptor maps the five canonical trip
//! fields (and optional coordinates) to columns, by header name or by
//! zero-based position, and names the timestamp format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Column {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripColumns {
    pub trip_id: Column,
    pub start_station: Column,
    pub start_time: Column,
    pub end_station: Column,
    pub end_time: Column,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_lat: Option<Column>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_lng: Option<Column>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_lat: Option<Column>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_lng: Option<Column>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripSchema {
    pub id: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// chrono `strftime` pattern for both timestamps, in city-local time.
    pub timestamp_format: String,
    /// Rows without a start or end station (dockless e-bike parking) are
    /// counted as skipped instead of malformed.
    #[serde(default)]
    pub skip_missing_station: bool,
    pub columns: TripColumns,
}

fn default_delimiter() -> char {
    ','
}

const BUILTIN: &[(&str, &str)] = &[
    ("citibike", include_str!("../schemas/citibike.json")),
    ("divvy", include_str!("../schemas/divvy.json")),
    ("capitalbikeshare", include_str!("../schemas/capitalbikeshare.json")),
    ("bluebikes", include_str!("../schemas/bluebikes.json")),
    ("santander", include_str!("../schemas/santander.json")),
];

pub fn builtin_ids() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|b| b.0)
}

impl TripSchema {
    pub fn builtin(id: &str) -> Option<TripSchema> {
        BUILTIN
            .iter()
            .find(|b| b.0 == id)
            .map(|b| serde_json::from_str(b.1).expect("built-in schema is valid"))
    }

    pub fn load(path: &Path) -> Result<TripSchema> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: TripSchema = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if schema.delimiter.len_utf8() != 1 {
            return Err(Error::format(path, "delimiter must be a single-byte character"));
        }
        Ok(schema)
    }

    /// A built-in id, or otherwise a path to a descriptor file (relative
    /// paths resolve against `base`).
    pub fn resolve(spec: &str, base: &Path) -> Result<TripSchema> {
        if let Some(s) = Self::builtin(spec) {
            return Ok(s);
        }
        let path = base.join(spec);
        if path.is_file() {
            return Self::load(&path);
        }
        Err(Error::invalid(format!(
            "unknown schema {spec:?}: not a built-in id ({}) and no such file",
            builtin_ids().collect::<Vec<_>>().join(", ")
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse() {
        for id in builtin_ids() {
            let s = TripSchema::builtin(id).unwrap();
            assert_eq!(s.id, id);
        }
        assert!(TripSchema::builtin("nope").is_none());
    }

    #[test]
    fn columns_by_name_or_position() {
        let s: TripSchema = serde_json::from_str(
            r#"{"id": "x", "timestamp_format": "%Y-%m-%d %H:%M",
                "columns": {"trip_id": 0, "start_station": "from", "start_time": 2,
                            "end_station": "to", "end_time": 4}}"#,
        )
        .unwrap();
        assert_eq!(s.columns.trip_id, Column::Index(0));
        assert_eq!(s.columns.start_station, Column::Name("from".into()));
        assert_eq!(s.delimiter, ',');
        assert!(!s.skip_missing_station);
    }

    #[test]
    fn unknown_id_is_validation_error() {
        let err = TripSchema::resolve("metro-x", Path::new("/nonexistent")).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
    }
}
