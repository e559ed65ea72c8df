//! Canonical on-disk dataset layout.
//!
//! A dataset directory holds one line-delimited JSON file per table:
//!
//! | file              | one line per        | fields                                        | order                   |
//! |-------------------|---------------------|-----------------------------------------------|-------------------------|
//! | `dataset.json`    | (single object)     | `format`, `window_seconds`                    | -                       |
//! | `pois.jsonl`      | POI                 | `id`, `category`, `lat`, `lon`                | by `id`                 |
//! | `checkins.jsonl`  | check-in            | `trajectory`, `user_id`, `poi_id`, `timestamp`| by user, then timestamp |
//! | `splits.jsonl`    | trajectory          | `trajectory`, `split`                         | by trajectory id        |
//!
//! `trajectory` is `"<user_id>:<ordinal>"`, `timestamp` is RFC 3339 UTC with
//! second precision, `split` is one of `train`, `validation`, `test`. Floats
//! are written in shortest round-trip form so a read/write cycle is
//! byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{CheckIn, Dataset, Poi, PoiId, Split, Trajectory, TrajectoryId, UserId};

pub const FORMAT_TAG: &str = "nextpoi-dataset/1";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: unsupported dataset format `{found}`")]
    Format { path: PathBuf, found: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_owned(), source }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    window_seconds: i64,
}

#[derive(Serialize, Deserialize)]
struct CheckInLine {
    trajectory: TrajectoryId,
    user_id: UserId,
    poi_id: PoiId,
    timestamp: DateTime<Utc>,
}

#[derive(Serialize, Deserialize)]
struct SplitLine {
    trajectory: TrajectoryId,
    split: Split,
}

/// Writes `value` as pretty JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| StoreError::Parse {
        path: path.to_owned(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn write_lines<T: Serialize>(
    path: &Path,
    rows: impl IntoIterator<Item = T>,
) -> Result<(), StoreError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, &row).expect("serializable row");
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| StoreError::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(row);
    }
    Ok(out)
}

fn checkin_lines(dataset: &Dataset) -> Vec<CheckInLine> {
    let mut trajectories: Vec<&Trajectory> = dataset.trajectories().collect();
    trajectories.sort_by(|a, b| a.id.cmp(&b.id));
    trajectories
        .iter()
        .flat_map(|t| {
            t.checkins.iter().map(|c| CheckInLine {
                trajectory: t.id.clone(),
                user_id: c.user_id.clone(),
                poi_id: c.poi_id.clone(),
                timestamp: c.timestamp,
            })
        })
        .collect()
}

fn split_lines(dataset: &Dataset) -> impl Iterator<Item = SplitLine> + '_ {
    dataset
        .splits
        .iter()
        .map(|(trajectory, split)| SplitLine { trajectory: trajectory.clone(), split: *split })
}

/// Writes `dataset` into `dir` (created if missing) in canonical form.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<(), StoreError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(
        &dir.join("dataset.json"),
        &Header { format: FORMAT_TAG.into(), window_seconds: dataset.window_seconds },
    )?;
    write_lines(&dir.join("pois.jsonl"), dataset.pois.values())?;
    write_lines(&dir.join("checkins.jsonl"), checkin_lines(dataset))?;
    write_lines(&dir.join("splits.jsonl"), split_lines(dataset))
}

/// SHA-256 (hex) of the canonical line serialization of all three tables
/// plus the window, identical for datasets that would be written identically.
pub fn dataset_digest(dataset: &Dataset) -> String {
    fn feed<T: Serialize>(h: &mut Sha256, table: &str, rows: impl IntoIterator<Item = T>) {
        h.update(table.as_bytes());
        h.update(b"\n");
        for row in rows {
            h.update(serde_json::to_vec(&row).expect("serializable row"));
            h.update(b"\n");
        }
    }
    let mut h = Sha256::new();
    feed(&mut h, FORMAT_TAG, [dataset.window_seconds]);
    feed(&mut h, "pois", dataset.pois.values());
    feed(&mut h, "checkins", checkin_lines(dataset));
    feed(&mut h, "splits", split_lines(dataset));
    hex::encode(h.finalize())
}

/// Reads a dataset directory written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<Dataset, StoreError> {
    let header_path = dir.join("dataset.json");
    let header: Header = read_json(&header_path)?;
    if header.format != FORMAT_TAG {
        return Err(StoreError::Format { path: header_path, found: header.format });
    }

    let pois: BTreeMap<PoiId, Poi> = read_lines::<Poi>(&dir.join("pois.jsonl"))?
        .into_iter()
        .map(|p| (p.id.clone(), p))
        .collect();

    let mut grouped: BTreeMap<TrajectoryId, Vec<CheckIn>> = BTreeMap::new();
    for line in read_lines::<CheckInLine>(&dir.join("checkins.jsonl"))? {
        grouped.entry(line.trajectory).or_default().push(CheckIn {
            user_id: line.user_id,
            poi_id: line.poi_id,
            timestamp: line.timestamp,
        });
    }
    let mut users: BTreeMap<UserId, Vec<Trajectory>> = BTreeMap::new();
    for (id, checkins) in grouped {
        users.entry(id.user_id.clone()).or_default().push(Trajectory { id, checkins });
    }

    let splits = read_lines::<SplitLine>(&dir.join("splits.jsonl"))?
        .into_iter()
        .map(|s| (s.trajectory, s.split))
        .collect();

    Ok(Dataset { window_seconds: header.window_seconds, pois, users, splits })
}
