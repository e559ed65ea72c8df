//! Seeded generator for small Foursquare-format check-in exports.
//!
//! The output is built so that ingestion with the same support threshold and
//! window leaves it untouched: every user and POI has at least
//! `min_support` check-ins, trajectories span at most 15 hours and start at
//! least two days apart, and timestamps are unique per user. The manifest
//! therefore states the exact counts ingestion must report.

use std::fmt::Write as _;
use std::io::BufReader;
use std::path::Path;

use chrono::{DateTime, TimeDelta, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{ingest, DatasetStats, FieldOrder, IngestConfig, IngestError, ParseSummary};
use crate::store::{write_dataset, write_json, StoreError};

pub const GENERATOR_TAG: &str = "nextpoi-synthetic/1";
pub const RAW_FILE: &str = "raw_checkins.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";

const CATEGORIES: [&str; 12] = [
    "Coffee Shop", "Bar", "Museum", "Park", "Theater", "Gym", "Bookstore", "Bakery", "Subway",
    "Pizza Place", "Art Gallery", "Office",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub users: usize,
    pub pois: usize,
    pub categories: usize,
    pub min_trajectories: usize,
    pub max_trajectories: usize,
    pub min_trajectory_len: usize,
    pub max_trajectory_len: usize,
    pub min_support: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            users: 20,
            pois: 50,
            categories: 10,
            min_trajectories: 4,
            max_trajectories: 8,
            min_trajectory_len: 3,
            max_trajectory_len: 6,
            min_support: 10,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SyntheticError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Ground truth declared by the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub config: SyntheticConfig,
    pub stats: DatasetStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticExport {
    pub tsv: String,
    pub manifest: Manifest,
}

fn check(c: &SyntheticConfig) -> Result<(), SyntheticError> {
    let bad = |m: &str| Err(SyntheticError::Config(m.into()));
    if c.users == 0 || c.pois == 0 {
        return bad("users and pois must be positive");
    }
    if c.categories == 0 || c.categories > CATEGORIES.len() || c.categories > c.pois {
        return bad("categories must be between 1 and min(pois, 12)");
    }
    if c.min_trajectories == 0 || c.min_trajectories > c.max_trajectories {
        return bad("trajectory count range is empty");
    }
    if c.min_trajectory_len < 2 || c.min_trajectory_len > c.max_trajectory_len || c.max_trajectory_len > 6 {
        return bad("trajectory length range must lie within 2..=6");
    }
    if c.min_trajectories * c.min_trajectory_len < c.min_support {
        return bad("users could fall below min_support");
    }
    Ok(())
}

fn foursquare_time(t: DateTime<Utc>) -> String {
    t.format("%a %b %d %H:%M:%S +0000 %Y").to_string()
}

/// Generates an export and its manifest; identical for identical configs.
pub fn generate(config: &SyntheticConfig) -> Result<SyntheticExport, SyntheticError> {
    check(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let pois: Vec<(String, usize, f64, f64)> = (0..config.pois)
        .map(|i| {
            let lat = 40.70 + rng.random_range(0.0..0.10);
            let lon = -74.02 + rng.random_range(0.0..0.09);
            (format!("syn{i:04}"), i % config.categories, lat, lon)
        })
        .collect();

    // Trajectory shapes first, so the visit multiset can be sized to them.
    let shapes: Vec<Vec<usize>> = (0..config.users)
        .map(|_| {
            let n = rng.random_range(config.min_trajectories..=config.max_trajectories);
            (0..n).map(|_| rng.random_range(config.min_trajectory_len..=config.max_trajectory_len)).collect()
        })
        .collect();
    let mut total: usize = shapes.iter().flatten().sum();
    let floor = config.pois * config.min_support;
    let mut shapes = shapes;
    // Grow the shortest trajectories until every POI can reach its quota.
    while total < floor {
        let slot = shapes
            .iter_mut()
            .flat_map(|s| s.iter_mut())
            .filter(|len| **len < config.max_trajectory_len)
            .min_by_key(|len| **len);
        match slot {
            Some(len) => *len += 1,
            None => {
                return Err(SyntheticError::Config("too few check-in slots for the POI support floor".into()))
            }
        }
        total += 1;
    }

    let mut visits: Vec<usize> = (0..config.pois).flat_map(|p| std::iter::repeat_n(p, config.min_support)).collect();
    visits.extend((floor..total).map(|_| rng.random_range(0..config.pois)));
    visits.shuffle(&mut rng);

    let epoch = Utc.with_ymd_and_hms(2012, 4, 3, 0, 0, 0).single().expect("valid epoch");
    let mut tsv = String::new();
    let mut next = visits.into_iter();
    for (u, shape) in shapes.iter().enumerate() {
        let mut start = epoch + TimeDelta::seconds(rng.random_range(0..86_400));
        for (k, &len) in shape.iter().enumerate() {
            if k > 0 {
                start += TimeDelta::days(2) + TimeDelta::seconds(rng.random_range(0..86_400));
            }
            let mut t = start;
            for j in 0..len {
                if j > 0 {
                    t += TimeDelta::seconds(rng.random_range(600..=10_800));
                }
                let (id, cat, lat, lon) = &pois[next.next().expect("visit per slot")];
                let _ = writeln!(
                    tsv,
                    "{}\t{id}\tcat{cat:02}\t{}\t{lat}\t{lon}\t-240\t{}",
                    u + 1,
                    CATEGORIES[*cat],
                    foursquare_time(t)
                );
            }
        }
    }

    let stats = DatasetStats {
        users: config.users,
        pois: config.pois,
        categories: config.categories,
        checkins: total,
        trajectories: shapes.iter().map(Vec::len).sum(),
    };
    Ok(SyntheticExport {
        tsv,
        manifest: Manifest { generator: GENERATOR_TAG.into(), config: *config, stats },
    })
}

/// Ingestion settings matching the generator's guarantees.
pub fn ingest_config(config: &SyntheticConfig) -> IngestConfig {
    IngestConfig { min_support: config.min_support, seed: config.seed, ..IngestConfig::default() }
}

/// Writes the raw export, the manifest and the ingested dataset into `dir`.
pub fn write_fixture(dir: &Path, config: &SyntheticConfig) -> Result<(Manifest, ParseSummary), SyntheticError> {
    let export = generate(config)?;
    std::fs::create_dir_all(dir).map_err(|source| SyntheticError::Io { path: dir.display().to_string(), source })?;
    let raw = dir.join(RAW_FILE);
    std::fs::write(&raw, &export.tsv).map_err(|source| SyntheticError::Io { path: raw.display().to_string(), source })?;
    write_json(&dir.join(MANIFEST_FILE), &export.manifest)?;
    let out = ingest(BufReader::new(export.tsv.as_bytes()), &FieldOrder::FOURSQUARE, &ingest_config(config))?;
    write_dataset(&out.dataset, dir)?;
    Ok((export.manifest, out.parse))
}
