use std::collections::HashMap;

use super::parse::RawCheckInRecord;
use crate::domain::CheckIn;

/// Anything countable towards user and POI support.
pub trait Visit {
    fn user_key(&self) -> &str;
    fn poi_key(&self) -> &str;
}

impl Visit for RawCheckInRecord {
    fn user_key(&self) -> &str {
        &self.user_id
    }

    fn poi_key(&self) -> &str {
        &self.venue_id
    }
}

impl Visit for CheckIn {
    fn user_key(&self) -> &str {
        self.user_id.as_str()
    }

    fn poi_key(&self) -> &str {
        self.poi_id.as_str()
    }
}

fn drop_unsupported<V: Visit>(
    records: &mut Vec<V>,
    min_support: usize,
    key: impl Fn(&V) -> &str,
) -> bool {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in records.iter() {
        *counts.entry(key(r)).or_default() += 1;
    }
    let keep: Vec<bool> = records.iter().map(|r| counts[key(r)] >= min_support).collect();
    if keep.iter().all(|&k| k) {
        return false;
    }
    let mut flags = keep.into_iter();
    records.retain(|_| flags.next().unwrap_or(false));
    true
}

/// Removes records of users and POIs with fewer than `min_support` records,
/// alternating the two passes until neither removes anything. Relative order
/// is preserved.
pub fn filter_min_support<V: Visit>(mut records: Vec<V>, min_support: usize) -> Vec<V> {
    let min_support = min_support.max(1);
    loop {
        let users_changed = drop_unsupported(&mut records, min_support, |r| r.user_key());
        let pois_changed = drop_unsupported(&mut records, min_support, |r| r.poi_key());
        if !users_changed && !pois_changed {
            return records;
        }
    }
}
