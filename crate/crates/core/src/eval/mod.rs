//! Ranking metrics, cold-start user grouping and the experiment runner.

mod render;
mod runner;

pub use render::render_report;
pub use runner::{
    read_transcripts, run_experiment, write_transcripts, ConfigFingerprint, ExperimentConfig,
    ExperimentOutput, FailureRecord, GroupReport, MetricsReport, RunMetrics, TranscriptRecord,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{PoiId, RecommendationList, TrajectoryId, UserId};

/// Cut-offs reported for Acc@k.
pub const ACC_CUTOFFS: [usize; 3] = [1, 5, 10];

/// Users per extreme cold-start group.
pub const COLD_START_GROUP_SIZE: usize = 30;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("metric undefined over an empty outcome set")]
    Empty,
    #[error("k must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankOutcome {
    pub instance_id: TrajectoryId,
    /// 1-based position of the target, absent when it was not recommended.
    pub rank: Option<usize>,
}

/// 1-based position of the first occurrence of `target`.
pub fn rank_of(list: &RecommendationList, target: &PoiId) -> Option<usize> {
    list.rank_of(target)
}

/// Share of outcomes whose target ranks within the top `k`.
pub fn acc_at_k(ranks: &[Option<usize>], k: usize) -> Result<f64, MetricError> {
    if k == 0 {
        return Err(MetricError::ZeroK);
    }
    if ranks.is_empty() {
        return Err(MetricError::Empty);
    }
    let hits = ranks.iter().filter(|r| matches!(r, Some(r) if *r <= k)).count();
    Ok(hits as f64 / ranks.len() as f64)
}

/// Mean reciprocal rank, absent ranks contributing 0.
pub fn mrr(ranks: &[Option<usize>]) -> Result<f64, MetricError> {
    if ranks.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut by_rank: BTreeMap<usize, u64> = BTreeMap::new();
    for r in ranks.iter().flatten() {
        *by_rank.entry(*r).or_default() += 1;
    }
    let total = neumaier(by_rank.iter().map(|(&r, &n)| n as f64 / r as f64));
    Ok(total / ranks.len() as f64)
}

/// Compensated summation.
fn neumaier(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    #[serde(rename = "acc@1")]
    pub acc_at_1: f64,
    #[serde(rename = "acc@5")]
    pub acc_at_5: f64,
    #[serde(rename = "acc@10")]
    pub acc_at_10: f64,
    pub mrr: f64,
}

impl MetricSet {
    pub fn compute(ranks: &[Option<usize>]) -> Result<Self, MetricError> {
        Ok(Self {
            acc_at_1: acc_at_k(ranks, 1)?,
            acc_at_5: acc_at_k(ranks, 5)?,
            acc_at_10: acc_at_k(ranks, 10)?,
            mrr: mrr(ranks)?,
        })
    }

    /// Arithmetic mean per metric.
    pub fn mean(sets: &[MetricSet]) -> Option<Self> {
        if sets.is_empty() {
            return None;
        }
        let n = sets.len() as f64;
        let avg = |f: fn(&MetricSet) -> f64| neumaier(sets.iter().map(f)) / n;
        Some(Self {
            acc_at_1: avg(|m| m.acc_at_1),
            acc_at_5: avg(|m| m.acc_at_5),
            acc_at_10: avg(|m| m.acc_at_10),
            mrr: avg(|m| m.mrr),
        })
    }

    pub fn values(&self) -> [f64; 4] {
        [self.acc_at_1, self.acc_at_5, self.acc_at_10, self.mrr]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserGroup {
    Inactive,
    Normal,
    VeryActive,
}

impl UserGroup {
    pub const ALL: [UserGroup; 3] = [UserGroup::Inactive, UserGroup::Normal, UserGroup::VeryActive];
}

impl fmt::Display for UserGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UserGroup::Inactive => "inactive",
            UserGroup::Normal => "normal",
            UserGroup::VeryActive => "very_active",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColdStartGrouping {
    pub inactive: BTreeSet<UserId>,
    pub normal: BTreeSet<UserId>,
    pub very_active: BTreeSet<UserId>,
}

impl ColdStartGrouping {
    pub fn group_of(&self, user: &UserId) -> Option<UserGroup> {
        if self.inactive.contains(user) {
            Some(UserGroup::Inactive)
        } else if self.very_active.contains(user) {
            Some(UserGroup::VeryActive)
        } else if self.normal.contains(user) {
            Some(UserGroup::Normal)
        } else {
            None
        }
    }

    pub fn members(&self, group: UserGroup) -> &BTreeSet<UserId> {
        match group {
            UserGroup::Inactive => &self.inactive,
            UserGroup::Normal => &self.normal,
            UserGroup::VeryActive => &self.very_active,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cold-start grouping needs at least {needed} users, got {got}")]
pub struct GroupingError {
    pub needed: usize,
    pub got: usize,
}

/// Splits users into the [`COLD_START_GROUP_SIZE`] least and most active by
/// training trajectory count, with everyone else normal.
pub fn cold_start_groups(counts: &BTreeMap<UserId, usize>) -> Result<ColdStartGrouping, GroupingError> {
    cold_start_groups_sized(counts, COLD_START_GROUP_SIZE)
}

/// As [`cold_start_groups`] with `size` users per extreme group. Ties go to
/// the smaller user id in both extremes; the most active group is chosen
/// from the users left after the inactive group.
pub fn cold_start_groups_sized(
    counts: &BTreeMap<UserId, usize>,
    size: usize,
) -> Result<ColdStartGrouping, GroupingError> {
    let needed = 2 * size + 1;
    if counts.len() < needed {
        return Err(GroupingError { needed, got: counts.len() });
    }
    let mut ascending: Vec<(&UserId, usize)> = counts.iter().map(|(u, &n)| (u, n)).collect();
    ascending.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    let inactive: BTreeSet<UserId> = ascending[..size].iter().map(|(u, _)| (*u).clone()).collect();

    let mut rest: Vec<(&UserId, usize)> = ascending[size..].to_vec();
    rest.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let very_active = rest[..size].iter().map(|(u, _)| (*u).clone()).collect();
    let normal = rest[size..].iter().map(|(u, _)| (*u).clone()).collect();
    Ok(ColdStartGrouping { inactive, normal, very_active })
}
