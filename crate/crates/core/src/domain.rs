//! Problem-statement data model shared across the pipeline.
//!
//! Every type here is an immutable value object once built. `Dataset` holds
//! the POI table (`P`, cardinality `M`), the user table (`U`, cardinality `N`)
//! with each user's trajectories, and the train/validation/test partition.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Default trajectory window: 24 hours.
pub const DEFAULT_WINDOW_SECONDS: i64 = 24 * 60 * 60;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Opaque POI identifier, kept as the source export wrote it.
    PoiId
);
string_id!(
    /// Opaque user identifier.
    UserId
);

/// A point of interest: `⟨id, cat, lat, lon⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub id: PoiId,
    pub category: String,
    pub lat: f64,
    pub lon: f64,
}

/// One user visiting one POI at one instant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckIn {
    pub user_id: UserId,
    pub poi_id: PoiId,
    pub timestamp: DateTime<Utc>,
}

/// Identifies a trajectory as the `ordinal`-th (0-based, chronological)
/// trajectory of a user. Serialized as `"<user_id>:<ordinal>"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrajectoryId {
    pub user_id: UserId,
    pub ordinal: u32,
}

impl TrajectoryId {
    pub fn new(user_id: UserId, ordinal: u32) -> Self {
        Self { user_id, ordinal }
    }
}

impl fmt::Display for TrajectoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.user_id, self.ordinal)
    }
}

impl FromStr for TrajectoryId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (user, ordinal) = s
            .rsplit_once(':')
            .ok_or_else(|| format!("trajectory id `{s}` lacks `:<ordinal>`"))?;
        let ordinal = ordinal
            .parse()
            .map_err(|_| format!("trajectory id `{s}` has a non-numeric ordinal"))?;
        Ok(Self::new(UserId::new(user), ordinal))
    }
}

impl Serialize for TrajectoryId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TrajectoryId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// An ordered run of one user's check-ins inside a bounded time window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: TrajectoryId,
    pub checkins: Vec<CheckIn>,
}

impl Trajectory {
    pub fn user_id(&self) -> &UserId {
        &self.id.user_id
    }

    pub fn first(&self) -> Option<&CheckIn> {
        self.checkins.first()
    }

    pub fn last(&self) -> Option<&CheckIn> {
        self.checkins.last()
    }

    pub fn span(&self) -> TimeDelta {
        match (self.first(), self.last()) {
            (Some(a), Some(b)) => b.timestamp - a.timestamp,
            _ => TimeDelta::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// The structured check-in dataset produced by the DataAgent.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Trajectory window the dataset was segmented with.
    pub window_seconds: i64,
    pub pois: BTreeMap<PoiId, Poi>,
    /// Per-user trajectories in chronological order.
    pub users: BTreeMap<UserId, Vec<Trajectory>>,
    pub splits: BTreeMap<TrajectoryId, Split>,
}

impl Default for Dataset {
    fn default() -> Self {
        Self {
            window_seconds: DEFAULT_WINDOW_SECONDS,
            pois: BTreeMap::new(),
            users: BTreeMap::new(),
            splits: BTreeMap::new(),
        }
    }
}

impl Dataset {
    pub fn trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.users.values().flatten()
    }

    pub fn checkins(&self) -> impl Iterator<Item = &CheckIn> {
        self.trajectories().flat_map(|t| t.checkins.iter())
    }

    pub fn poi(&self, id: &str) -> Option<&Poi> {
        self.pois.get(id)
    }

    pub fn split_of(&self, id: &TrajectoryId) -> Option<Split> {
        self.splits.get(id).copied()
    }

    /// `M`: number of distinct POIs.
    pub fn poi_count(&self) -> usize {
        self.pois.len()
    }

    /// `N`: number of users with at least one trajectory.
    pub fn user_count(&self) -> usize {
        self.users.values().filter(|t| !t.is_empty()).count()
    }

    /// `Z`: number of distinct timestamps across all check-ins.
    pub fn distinct_timestamps(&self) -> usize {
        self.checkins()
            .map(|c| c.timestamp)
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Train trajectory count per user, the basis of cold-start grouping.
    pub fn train_trajectory_counts(&self) -> BTreeMap<UserId, usize> {
        self.users
            .iter()
            .map(|(user, trajectories)| {
                let n = trajectories
                    .iter()
                    .filter(|t| self.split_of(&t.id) == Some(Split::Train))
                    .count();
                (user.clone(), n)
            })
            .collect()
    }
}

/// One `(p_i, cat(p_i), t_i)` entry of a user's visit history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub poi_id: PoiId,
    pub category: String,
    pub timestamp: DateTime<Utc>,
}

/// One `(p_j, Δd(p_j, p_last), cat(p_j))` entry of a candidate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePoi {
    pub poi_id: PoiId,
    /// Haversine distance to the last visited POI, in meters.
    pub distance_to_last: f64,
    pub category: String,
}

/// A held-out final check-in together with everything the Analyst may see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalInstance {
    /// The trajectory whose final check-in is the target.
    pub id: TrajectoryId,
    pub user_id: UserId,
    /// Most recent check-ins from strictly earlier trajectories, oldest first.
    pub long_term: Vec<HistoryRecord>,
    /// The trajectory's check-ins preceding the target, oldest first.
    pub recent: Vec<HistoryRecord>,
    pub candidates: Vec<CandidatePoi>,
    pub target_poi_id: PoiId,
    pub target_timestamp: DateTime<Utc>,
}

impl EvalInstance {
    /// Long-term followed by recent history.
    pub fn history(&self) -> impl Iterator<Item = &HistoryRecord> {
        self.long_term.iter().chain(self.recent.iter())
    }
}

/// A ranked list of candidate ids with the model's explanation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendationList {
    pub ranked_poi_ids: Vec<PoiId>,
    pub explanation: String,
}

impl RecommendationList {
    pub fn rank_of(&self, poi: &PoiId) -> Option<usize> {
        self.ranked_poi_ids
            .iter()
            .position(|p| p == poi)
            .map(|i| i + 1)
    }

    pub fn contains(&self, poi: &PoiId) -> bool {
        self.ranked_poi_ids.contains(poi)
    }
}

/// A single broken invariant found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyPoiId,
    PoiKeyMismatch { key: PoiId, id: PoiId },
    InvalidCoordinates { poi: PoiId, lat: String, lon: String },
    UserKeyMismatch { key: UserId, trajectory: TrajectoryId },
    EmptyTrajectory { trajectory: TrajectoryId },
    ForeignCheckIn { trajectory: TrajectoryId, user: UserId },
    UnorderedTrajectory { trajectory: TrajectoryId },
    WindowExceeded { trajectory: TrajectoryId, span_seconds: i64, window_seconds: i64 },
    DanglingPoi { trajectory: TrajectoryId, poi: PoiId },
    MissingSplit { trajectory: TrajectoryId },
    UnknownSplitTrajectory { trajectory: TrajectoryId },
    DuplicateTrajectory { trajectory: TrajectoryId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyPoiId => write!(f, "POI with empty id"),
            Violation::PoiKeyMismatch { key, id } => {
                write!(f, "POI table key `{key}` holds POI `{id}`")
            }
            Violation::InvalidCoordinates { poi, lat, lon } => {
                write!(f, "POI `{poi}` has invalid coordinates ({lat}, {lon})")
            }
            Violation::UserKeyMismatch { key, trajectory } => {
                write!(f, "user `{key}` lists trajectory `{trajectory}` of another user")
            }
            Violation::EmptyTrajectory { trajectory } => {
                write!(f, "trajectory `{trajectory}` is empty")
            }
            Violation::ForeignCheckIn { trajectory, user } => {
                write!(f, "trajectory `{trajectory}` contains a check-in of user `{user}`")
            }
            Violation::UnorderedTrajectory { trajectory } => {
                write!(f, "trajectory `{trajectory}` has decreasing timestamps")
            }
            Violation::WindowExceeded { trajectory, span_seconds, window_seconds } => write!(
                f,
                "trajectory `{trajectory}` spans {span_seconds}s, exceeding the {window_seconds}s window"
            ),
            Violation::DanglingPoi { trajectory, poi } => {
                write!(f, "trajectory `{trajectory}` references unknown POI `{poi}`")
            }
            Violation::MissingSplit { trajectory } => {
                write!(f, "trajectory `{trajectory}` is not assigned to a split")
            }
            Violation::UnknownSplitTrajectory { trajectory } => {
                write!(f, "split assignment for unknown trajectory `{trajectory}`")
            }
            Violation::DuplicateTrajectory { trajectory } => {
                write!(f, "trajectory id `{trajectory}` appears more than once")
            }
        }
    }
}

fn valid_lat(lat: f64) -> bool {
    (-90.0..=90.0).contains(&lat)
}

fn valid_lon(lon: f64) -> bool {
    (-180.0..=180.0).contains(&lon)
}

pub(crate) fn valid_coordinates(lat: f64, lon: f64) -> bool {
    valid_lat(lat) && valid_lon(lon)
}

/// Checks every dataset invariant and returns the violations found.
pub fn validate_dataset(dataset: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();

    for (key, poi) in &dataset.pois {
        if poi.id.as_str().is_empty() {
            out.push(Violation::EmptyPoiId);
        }
        if key != &poi.id {
            out.push(Violation::PoiKeyMismatch { key: key.clone(), id: poi.id.clone() });
        }
        if !valid_coordinates(poi.lat, poi.lon) {
            out.push(Violation::InvalidCoordinates {
                poi: poi.id.clone(),
                lat: poi.lat.to_string(),
                lon: poi.lon.to_string(),
            });
        }
    }

    let mut seen = BTreeSet::new();
    for (user, trajectories) in &dataset.users {
        for t in trajectories {
            if !seen.insert(t.id.clone()) {
                out.push(Violation::DuplicateTrajectory { trajectory: t.id.clone() });
            }
            if t.user_id() != user {
                out.push(Violation::UserKeyMismatch { key: user.clone(), trajectory: t.id.clone() });
            }
            if t.checkins.is_empty() {
                out.push(Violation::EmptyTrajectory { trajectory: t.id.clone() });
                continue;
            }
            if let Some(c) = t.checkins.iter().find(|c| &c.user_id != t.user_id()) {
                out.push(Violation::ForeignCheckIn {
                    trajectory: t.id.clone(),
                    user: c.user_id.clone(),
                });
            }
            if t.checkins.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
                out.push(Violation::UnorderedTrajectory { trajectory: t.id.clone() });
            }
            let span = t.span().num_seconds();
            if span > dataset.window_seconds {
                out.push(Violation::WindowExceeded {
                    trajectory: t.id.clone(),
                    span_seconds: span,
                    window_seconds: dataset.window_seconds,
                });
            }
            let dangling: BTreeSet<&PoiId> = t
                .checkins
                .iter()
                .map(|c| &c.poi_id)
                .filter(|p| !dataset.pois.contains_key(p.as_str()))
                .collect();
            for poi in dangling {
                out.push(Violation::DanglingPoi { trajectory: t.id.clone(), poi: poi.clone() });
            }
            if !dataset.splits.contains_key(&t.id) {
                out.push(Violation::MissingSplit { trajectory: t.id.clone() });
            }
        }
    }

    for id in dataset.splits.keys() {
        if !seen.contains(id) {
            out.push(Violation::UnknownSplitTrajectory { trajectory: id.clone() });
        }
    }

    out
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn well_formed_fixture_has_no_violations() {
        assert_eq!(validate_dataset(&two_user_dataset()), vec![]);
    }

    #[test]
    fn trajectory_spanning_25_hours_is_reported() {
        let mut ds = two_user_dataset();
        let t = &mut ds.users.get_mut("u1").unwrap()[0];
        t.checkins[2].timestamp = t.checkins[0].timestamp + TimeDelta::hours(25);
        let v = validate_dataset(&ds);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(matches!(&v[0], Violation::WindowExceeded { trajectory, .. } if trajectory.to_string() == "u1:0"));
        assert!(v[0].to_string().contains("u1:0"));
    }

    #[test]
    fn dangling_poi_is_reported() {
        let mut ds = two_user_dataset();
        ds.users.get_mut("u2").unwrap()[1].checkins[1].poi_id = PoiId::new("ghost");
        let v = validate_dataset(&ds);
        assert_eq!(
            v,
            vec![Violation::DanglingPoi {
                trajectory: TrajectoryId::new(UserId::new("u2"), 1),
                poi: PoiId::new("ghost"),
            }]
        );
    }

    #[test]
    fn validation_is_total_on_garbage() {
        let mut ds = two_user_dataset();
        ds.pois.insert(PoiId::new("bad"), poi("", "x", f64::NAN, 500.0));
        let u1 = ds.users.get_mut("u1").unwrap();
        u1[0].checkins.clear();
        u1[1].checkins.reverse();
        u1[2].checkins[0].user_id = UserId::new("intruder");
        ds.splits.insert(TrajectoryId::new(UserId::new("nobody"), 7), Split::Test);
        ds.splits.remove(&TrajectoryId::new(UserId::new("u2"), 2));
        let v = validate_dataset(&ds);
        let kinds: Vec<_> = v.iter().map(std::mem::discriminant).collect();
        for expected in [
            Violation::EmptyPoiId,
            Violation::EmptyTrajectory { trajectory: TrajectoryId::new("u1".into(), 0) },
            Violation::UnorderedTrajectory { trajectory: TrajectoryId::new("u1".into(), 1) },
            Violation::ForeignCheckIn {
                trajectory: TrajectoryId::new("u1".into(), 2),
                user: "intruder".into(),
            },
            Violation::MissingSplit { trajectory: TrajectoryId::new("u2".into(), 2) },
            Violation::UnknownSplitTrajectory { trajectory: TrajectoryId::new("nobody".into(), 7) },
        ] {
            assert!(kinds.contains(&std::mem::discriminant(&expected)), "missing {expected:?} in {v:?}");
        }
    }

    #[test]
    fn trajectory_id_round_trips_through_text() {
        let id = TrajectoryId::new(UserId::new("user:with:colons"), 42);
        assert_eq!(id.to_string().parse::<TrajectoryId>().unwrap(), id);
        assert!("nocolon".parse::<TrajectoryId>().is_err());
    }

    #[test]
    fn cardinalities() {
        let ds = two_user_dataset();
        assert_eq!(ds.user_count(), 2);
        assert_eq!(ds.poi_count(), 3);
        assert_eq!(ds.distinct_timestamps(), 9);
        assert_eq!(ds.train_trajectory_counts()["u1"], 1);
    }
}
