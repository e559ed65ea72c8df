//! DataAgent: turns a raw LBSN export into a structured, split dataset and
//! builds the evaluation instances the Analyst is scored on.

mod filter;
mod instances;
mod parse;
mod segment;
mod split;

pub use filter::{filter_min_support, Visit};
pub use instances::{build_eval_instances, InstanceConfig, InstanceSet, SkipReport};
pub use parse::{
    parse_checkin_file, parse_timestamp, FieldOrder, LineError, ParsedFile, RawCheckInRecord,
    MAX_MALFORMED_FRACTION,
};
pub use segment::{chronological, segment_trajectories};
pub use split::{split_dataset, SplitRatios};

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use chrono::TimeDelta;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{CheckIn, Dataset, Poi, PoiId, UserId, DEFAULT_WINDOW_SECONDS};
use crate::geo::GeoError;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("reading input: {0}")]
    Io(#[source] std::io::Error),
    #[error("unknown input format `{0}`")]
    UnknownFormat(String),
    #[error("{} of {lines} lines are malformed (first at line {}: {})",
        failures.len(),
        failures.first().map_or(0, |f| f.line),
        failures.first().map_or("", |f| f.message.as_str()))]
    TooManyMalformed { failures: Vec<LineError>, lines: usize },
    #[error("invalid split ratios `{0}`; expected three positive integers like 8:1:1")]
    InvalidSplit(String),
    #[error("evaluation instances are built from the validation or test split only")]
    TrainSplitNotEvaluable,
    #[error("check-in references unknown POI `{0}`")]
    DanglingPoi(PoiId),
    #[error(transparent)]
    Geo(GeoError),
    #[error("invalid ingestion parameter: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub min_support: usize,
    pub window_seconds: i64,
    pub split: SplitRatios,
    pub seed: u64,
    #[serde(flatten)]
    pub instances: InstanceConfig,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            min_support: 10,
            window_seconds: DEFAULT_WINDOW_SECONDS,
            split: SplitRatios::default(),
            seed: 0,
            instances: InstanceConfig::default(),
        }
    }
}

/// Table cardinalities, in the column order of the usual dataset summary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub pois: usize,
    pub categories: usize,
    pub checkins: usize,
    pub trajectories: usize,
}

pub fn dataset_stats(dataset: &Dataset) -> DatasetStats {
    DatasetStats {
        users: dataset.user_count(),
        pois: dataset.poi_count(),
        categories: dataset.pois.values().map(|p| p.category.as_str()).collect::<BTreeSet<_>>().len(),
        checkins: dataset.checkins().count(),
        trajectories: dataset.trajectories().count(),
    }
}

/// Everything an ingestion run produced.
#[derive(Debug, Clone)]
pub struct IngestOutput {
    pub dataset: Dataset,
    pub stats: DatasetStats,
    pub parse: ParseSummary,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseSummary {
    pub lines: usize,
    pub malformed: usize,
    pub duplicates: usize,
    pub records: usize,
    pub after_filter: usize,
}

/// Builds the POI table and per-user trajectories from filtered records.
/// A venue's category and coordinates come from its first record.
pub fn build_dataset(records: &[RawCheckInRecord], config: &IngestConfig) -> Dataset {
    let mut pois: BTreeMap<PoiId, Poi> = BTreeMap::new();
    let mut per_user: BTreeMap<UserId, Vec<CheckIn>> = BTreeMap::new();
    for r in records {
        let poi_id = PoiId::new(r.venue_id.clone());
        pois.entry(poi_id.clone()).or_insert_with(|| Poi {
            id: poi_id.clone(),
            category: r.category_name.clone(),
            lat: r.lat,
            lon: r.lon,
        });
        let user = UserId::new(r.user_id.clone());
        per_user.entry(user.clone()).or_default().push(CheckIn {
            user_id: user,
            poi_id,
            timestamp: r.timestamp,
        });
    }
    let window = TimeDelta::seconds(config.window_seconds);
    let users: BTreeMap<_, _> = per_user
        .into_par_iter()
        .map(|(user, checkins)| {
            let trajectories = segment_trajectories(&user, checkins, window);
            (user, trajectories)
        })
        .collect();
    let splits = split_dataset(&users, config.split, config.seed);
    Dataset { window_seconds: config.window_seconds, pois, users, splits }
}

/// Parse → filter → aggregate → segment → split.
pub fn ingest(
    source: impl BufRead,
    format: &FieldOrder,
    config: &IngestConfig,
) -> Result<IngestOutput, IngestError> {
    if config.min_support == 0 {
        return Err(IngestError::InvalidConfig("min_support must be at least 1".into()));
    }
    if config.window_seconds <= 0 {
        return Err(IngestError::InvalidConfig("window must be positive".into()));
    }
    let parsed = parse_checkin_file(source, format)?;
    let mut summary = ParseSummary {
        lines: parsed.lines,
        malformed: parsed.failures.len(),
        duplicates: parsed.duplicates,
        records: parsed.records.len(),
        after_filter: 0,
    };
    for f in &parsed.failures {
        tracing::warn!(line = f.line, "skipping malformed line: {}", f.message);
    }
    let filtered = filter_min_support(parsed.records, config.min_support);
    summary.after_filter = filtered.len();
    let dataset = build_dataset(&filtered, config);
    let stats = dataset_stats(&dataset);
    Ok(IngestOutput { dataset, stats, parse: summary })
}
