use chrono::TimeDelta;

use crate::domain::{CheckIn, Trajectory, TrajectoryId, UserId};

/// Sort key for a user's check-in stream: time, then POI id for ties.
pub fn chronological(records: &mut [CheckIn]) {
    records.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.poi_id.cmp(&b.poi_id)));
}

/// Splits one user's check-ins into anchored-window trajectories: a record
/// opens a new trajectory when it falls more than `window` after the first
/// record of the current one.
pub fn segment_trajectories(
    user_id: &UserId,
    mut records: Vec<CheckIn>,
    window: TimeDelta,
) -> Vec<Trajectory> {
    chronological(&mut records);
    let mut out: Vec<Trajectory> = Vec::new();
    for record in records {
        match out.last_mut() {
            Some(current)
                if record.timestamp - current.checkins[0].timestamp <= window =>
            {
                current.checkins.push(record);
            }
            _ => {
                let id = TrajectoryId::new(user_id.clone(), out.len() as u32);
                out.push(Trajectory { id, checkins: vec![record] });
            }
        }
    }
    out
}
