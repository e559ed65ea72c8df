//! Tab-separated LBSN check-in exports.

use std::collections::HashSet;
use std::io::BufRead;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::domain::valid_coordinates;

/// A check-in line as found in the export, before filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCheckInRecord {
    pub user_id: String,
    pub venue_id: String,
    pub category_id: String,
    pub category_name: String,
    pub lat: f64,
    pub lon: f64,
    pub tz_offset_minutes: i32,
    pub utc_time: String,
    /// `utc_time` resolved to an instant.
    pub timestamp: DateTime<Utc>,
}

/// Column positions of each field within a line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldOrder {
    pub user_id: usize,
    pub venue_id: usize,
    pub category_id: usize,
    pub category_name: usize,
    pub lat: usize,
    pub lon: usize,
    pub tz_offset_minutes: usize,
    pub utc_time: usize,
}

impl FieldOrder {
    /// Foursquare NYC/TKY (TSMC2014) layout: user, venue, category id,
    /// category name, latitude, longitude, timezone offset, UTC time.
    pub const FOURSQUARE: FieldOrder = FieldOrder {
        user_id: 0,
        venue_id: 1,
        category_id: 2,
        category_name: 3,
        lat: 4,
        lon: 5,
        tz_offset_minutes: 6,
        utc_time: 7,
    };

    fn width(&self) -> usize {
        [
            self.user_id,
            self.venue_id,
            self.category_id,
            self.category_name,
            self.lat,
            self.lon,
            self.tz_offset_minutes,
            self.utc_time,
        ]
        .into_iter()
        .max()
        .unwrap_or(0)
            + 1
    }
}

impl FromStr for FieldOrder {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "foursquare" | "tsmc2014" => Ok(FieldOrder::FOURSQUARE),
            other => Err(IngestError::UnknownFormat(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineError {
    /// 1-based.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ParsedFile {
    pub records: Vec<RawCheckInRecord>,
    pub failures: Vec<LineError>,
    /// Exact duplicate lines dropped after their first occurrence.
    pub duplicates: usize,
    /// Non-blank lines seen.
    pub lines: usize,
}

/// Fraction of malformed lines beyond which ingestion aborts.
pub const MAX_MALFORMED_FRACTION: f64 = 0.01;

fn decode_line(bytes: &[u8]) -> String {
    match std::str::from_utf8(bytes) {
        Ok(s) => s.to_owned(),
        // Older exports are Latin-1; every byte maps to one code point.
        Err(_) => bytes.iter().map(|&b| b as char).collect(),
    }
}

/// Accepts the Foursquare form `Tue Apr 03 18:00:09 +0000 2012`, RFC 3339,
/// or a zone-less `YYYY-MM-DD HH:MM:SS` read as local time at the given
/// offset.
pub fn parse_timestamp(text: &str, tz_offset_minutes: i32) -> Option<DateTime<Utc>> {
    let text = text.trim();
    if let Ok(t) = DateTime::parse_from_str(text, "%a %b %d %H:%M:%S %z %Y") {
        return Some(t.with_timezone(&Utc));
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(text) {
        return Some(t.with_timezone(&Utc));
    }
    NaiveDateTime::parse_from_str(text, "%Y-%m-%d %H:%M:%S")
        .ok()
        .map(|local| (local - TimeDelta::minutes(tz_offset_minutes.into())).and_utc())
}

fn parse_fields(line: &str, order: &FieldOrder) -> Result<RawCheckInRecord, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < order.width() {
        return Err(format!("expected {} tab-separated fields, found {}", order.width(), fields.len()));
    }
    let text = |i: usize| fields[i].trim().to_owned();
    let lat: f64 = fields[order.lat]
        .trim()
        .parse()
        .map_err(|_| format!("latitude `{}` is not a number", fields[order.lat]))?;
    let lon: f64 = fields[order.lon]
        .trim()
        .parse()
        .map_err(|_| format!("longitude `{}` is not a number", fields[order.lon]))?;
    if !valid_coordinates(lat, lon) {
        return Err(format!("coordinates ({lat}, {lon}) out of range"));
    }
    let tz_offset_minutes: i32 = fields[order.tz_offset_minutes]
        .trim()
        .parse()
        .map_err(|_| format!("timezone offset `{}` is not an integer", fields[order.tz_offset_minutes]))?;
    let utc_time = text(order.utc_time);
    let timestamp = parse_timestamp(&utc_time, tz_offset_minutes)
        .ok_or_else(|| format!("unrecognised time `{utc_time}`"))?;
    let user_id = text(order.user_id);
    let venue_id = text(order.venue_id);
    if user_id.is_empty() || venue_id.is_empty() {
        return Err("empty user or venue id".into());
    }
    Ok(RawCheckInRecord {
        user_id,
        venue_id,
        category_id: text(order.category_id),
        category_name: text(order.category_name),
        lat,
        lon,
        tz_offset_minutes,
        utc_time,
        // second precision
        timestamp: DateTime::from_timestamp(timestamp.timestamp(), 0).unwrap_or(timestamp),
    })
}

/// Parses every line of `source`. Malformed lines are collected; if more
/// than [`MAX_MALFORMED_FRACTION`] of the lines are malformed the whole
/// file is rejected.
pub fn parse_checkin_file(
    source: impl BufRead,
    order: &FieldOrder,
) -> Result<ParsedFile, IngestError> {
    let mut out = ParsedFile::default();
    let mut seen: HashSet<Vec<u8>> = HashSet::new();
    for (i, raw) in source.split(b'\n').enumerate() {
        let mut bytes = raw.map_err(IngestError::Io)?;
        if bytes.last() == Some(&b'\r') {
            bytes.pop();
        }
        if bytes.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        out.lines += 1;
        let line = decode_line(&bytes);
        if !seen.insert(bytes) {
            out.duplicates += 1;
            continue;
        }
        match parse_fields(&line, order) {
            Ok(r) => out.records.push(r),
            Err(message) => out.failures.push(LineError { line: i + 1, message }),
        }
    }
    if out.lines > 0 && out.failures.len() as f64 > MAX_MALFORMED_FRACTION * out.lines as f64 {
        return Err(IngestError::TooManyMalformed { failures: out.failures, lines: out.lines });
    }
    Ok(out)
}
