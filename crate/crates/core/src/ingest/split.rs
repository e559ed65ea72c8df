use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::domain::{Split, Trajectory, TrajectoryId, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: u32,
    pub validation: u32,
    pub test: u32,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 8, validation: 1, test: 1 }
    }
}

impl fmt::Display for SplitRatios {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.train, self.validation, self.test)
    }
}

impl FromStr for SplitRatios {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || IngestError::InvalidSplit(s.to_owned());
        let parts: Vec<u32> = s
            .split(':')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [train, validation, test] if train > 0 && validation > 0 && test > 0 => {
                Ok(Self { train, validation, test })
            }
            _ => Err(bad()),
        }
    }
}

impl SplitRatios {
    /// `(train, validation, test)` sizes for a user with `n` trajectories.
    ///
    /// Validation and test each take `⌊share·n⌋` but at least one trajectory;
    /// train takes the remainder. Users with fewer than three trajectories
    /// keep everything in train.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        if n < 3 {
            return (n, 0, 0);
        }
        let total = u64::from(self.train + self.validation + self.test);
        let share = |r: u32| ((u64::from(r) * n as u64) / total) as usize;
        let validation = share(self.validation).max(1);
        let test = share(self.test).max(1);
        let validation = validation.min(n - 2);
        let test = test.min(n - 1 - validation);
        (n - validation - test, validation, test)
    }
}

/// Per-user chronological split: each user's earliest trajectories go to
/// train, the following ones to validation and the latest to test.
///
/// Trajectory starts are strictly increasing per user, so the order has no
/// ties and `seed` never changes the result; it is accepted so it can be
/// recorded with the other ingestion parameters.
pub fn split_dataset(
    users: &BTreeMap<UserId, Vec<Trajectory>>,
    ratios: SplitRatios,
    _seed: u64,
) -> BTreeMap<TrajectoryId, Split> {
    let mut out = BTreeMap::new();
    for trajectories in users.values() {
        let mut ordered: Vec<&Trajectory> = trajectories.iter().collect();
        ordered.sort_by_key(|t| (t.first().map(|c| c.timestamp), t.id.ordinal));
        let (train, validation, _) = ratios.sizes(ordered.len());
        for (i, t) in ordered.into_iter().enumerate() {
            let split = if i < train {
                Split::Train
            } else if i < train + validation {
                Split::Validation
            } else {
                Split::Test
            };
            out.insert(t.id.clone(), split);
        }
    }
    out
}
