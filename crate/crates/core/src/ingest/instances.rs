use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::domain::{CheckIn, Dataset, EvalInstance, HistoryRecord, Split};
use crate::geo::{annotate_candidates, EarthModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    /// `M′`: candidate set size.
    pub candidate_set_size: usize,
    /// `L`: long-term history length.
    pub long_term_length: usize,
    pub earth: EarthModel,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self { candidate_set_size: 100, long_term_length: 15, earth: EarthModel::default() }
    }
}

/// Trajectories that did not yield an instance, by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReport {
    /// Nothing precedes the final check-in.
    pub single_checkin: usize,
    /// The target POI already occurs earlier in the same trajectory.
    pub target_in_recent: usize,
    /// The target shares its timestamp with an earlier check-in.
    pub simultaneous_target: usize,
}

impl SkipReport {
    pub fn total(&self) -> usize {
        self.single_checkin + self.target_in_recent + self.simultaneous_target
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InstanceSet {
    pub instances: Vec<EvalInstance>,
    pub skipped: SkipReport,
}

fn record(dataset: &Dataset, c: &CheckIn) -> HistoryRecord {
    HistoryRecord {
        poi_id: c.poi_id.clone(),
        category: dataset.poi(c.poi_id.as_str()).map(|p| p.category.clone()).unwrap_or_default(),
        timestamp: c.timestamp,
    }
}

/// One instance per eligible trajectory of `split`, in user then trajectory
/// order. The target is the trajectory's final check-in; recent history is
/// everything before it in the trajectory; long-term history is the user's
/// latest `L` check-ins from earlier trajectories; candidates surround the
/// check-in preceding the target.
pub fn build_eval_instances(
    dataset: &Dataset,
    split: Split,
    config: &InstanceConfig,
) -> Result<InstanceSet, IngestError> {
    if split == Split::Train {
        return Err(IngestError::TrainSplitNotEvaluable);
    }
    let mut out = InstanceSet::default();
    for (user, trajectories) in &dataset.users {
        for (idx, t) in trajectories.iter().enumerate() {
            if dataset.split_of(&t.id) != Some(split) {
                continue;
            }
            let Some((target, recent)) = t.checkins.split_last() else {
                continue;
            };
            if recent.is_empty() {
                out.skipped.single_checkin += 1;
                continue;
            }
            if recent.iter().any(|c| c.poi_id == target.poi_id) {
                out.skipped.target_in_recent += 1;
                continue;
            }
            if recent.iter().any(|c| c.timestamp >= target.timestamp) {
                out.skipped.simultaneous_target += 1;
                continue;
            }
            let prior: Vec<&CheckIn> =
                trajectories[..idx].iter().flat_map(|p| p.checkins.iter()).collect();
            let skip = prior.len().saturating_sub(config.long_term_length);
            let long_term = prior[skip..].iter().map(|c| record(dataset, c)).collect();

            let last = recent.last().expect("non-empty recent history");
            let last_poi = dataset
                .poi(last.poi_id.as_str())
                .ok_or_else(|| IngestError::DanglingPoi(last.poi_id.clone()))?;
            let candidates = annotate_candidates(
                last_poi,
                &dataset.pois,
                config.candidate_set_size,
                config.earth,
            )
            .map_err(IngestError::Geo)?;

            out.instances.push(EvalInstance {
                id: t.id.clone(),
                user_id: user.clone(),
                long_term,
                recent: recent.iter().map(|c| record(dataset, c)).collect(),
                candidates,
                target_poi_id: target.poi_id.clone(),
                target_timestamp: target.timestamp,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::fixtures::{checkin, poi, two_user_dataset};
    use crate::domain::{Trajectory, TrajectoryId, UserId};

    #[test]
    fn final_checkin_is_target() {
        let ds = two_user_dataset();
        let set = build_eval_instances(&ds, Split::Test, &InstanceConfig::default()).unwrap();
        assert_eq!(set.instances.len(), 2);
        let i = &set.instances[0];
        assert_eq!(i.id.to_string(), "u1:2");
        let recent: Vec<_> = i.recent.iter().map(|r| r.poi_id.as_str()).collect();
        assert_eq!(recent, ["a", "b"]);
        assert_eq!(i.target_poi_id.as_str(), "c");
        assert_eq!(i.recent[0].category, "Theater");
        assert_eq!(i.long_term.len(), 6);
        // candidate set built around b, the check-in preceding the target
        assert_eq!(i.candidates[0].poi_id.as_str(), "b");
        assert_eq!(i.candidates[0].distance_to_last, 0.0);
    }

    #[test]
    fn skips_are_counted() {
        let mut ds = two_user_dataset();
        ds.users.get_mut("u1").unwrap()[2].checkins.truncate(1);
        let u2 = ds.users.get_mut("u2").unwrap();
        u2[2].checkins[2].poi_id = "a".into();
        let set = build_eval_instances(&ds, Split::Test, &InstanceConfig::default()).unwrap();
        assert!(set.instances.is_empty());
        assert_eq!(set.skipped.single_checkin, 1);
        assert_eq!(set.skipped.target_in_recent, 1);
        assert_eq!(set.skipped.total(), 2);
    }

    #[test]
    fn long_term_keeps_most_recent_l() {
        let mut ds = two_user_dataset();
        ds.pois.insert("d".into(), poi("d", "Gym", 40.78, -73.95));
        let user = UserId::new("u3");
        // 20 prior check-ins spread over 10 one-day trajectories, then the test one.
        let mut trajectories: Vec<Trajectory> = (0..10)
            .map(|d| Trajectory {
                id: TrajectoryId::new(user.clone(), d),
                checkins: vec![
                    checkin("u3", "a", d as i64 * 48),
                    checkin("u3", "d", d as i64 * 48 + 1),
                ],
            })
            .collect();
        trajectories.push(Trajectory {
            id: TrajectoryId::new(user.clone(), 10),
            checkins: vec![checkin("u3", "b", 1000), checkin("u3", "c", 1001)],
        });
        for t in &trajectories {
            ds.splits.insert(t.id.clone(), if t.id.ordinal == 10 { Split::Test } else { Split::Train });
        }
        let prior: Vec<_> = trajectories[..10].iter().flat_map(|t| t.checkins.clone()).collect();
        ds.users.insert(user, trajectories);

        let cfg = InstanceConfig { long_term_length: 15, ..Default::default() };
        let set = build_eval_instances(&ds, Split::Test, &cfg).unwrap();
        let inst = set.instances.iter().find(|i| i.user_id.as_str() == "u3").unwrap();
        assert_eq!(inst.long_term.len(), 15);
        let expected: Vec<_> = prior[5..].iter().map(|c| (c.poi_id.clone(), c.timestamp)).collect();
        let got: Vec<_> = inst.long_term.iter().map(|r| (r.poi_id.clone(), r.timestamp)).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn train_split_is_rejected() {
        assert!(matches!(
            build_eval_instances(&two_user_dataset(), Split::Train, &InstanceConfig::default()),
            Err(IngestError::TrainSplitNotEvaluable)
        ));
    }
}
