use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard, TryLockError};

use chrono::{DateTime, Utc};
use nextpoi_core::agents::{
    AgentId, AttributedError, Orchestrator, RouteOrigin, TaskContext, TaskInput, TaskKind, TaskOutcome,
};
use nextpoi_core::geo::{annotate_candidates, GeoPoint};
use nextpoi_core::ingest::InstanceConfig;
use nextpoi_core::{CandidatePoi, Dataset, HistoryRecord, PoiId};
use sha2::{Digest, Sha256};

use crate::api::{
    CreateSessionRequest, Event, EventBody, MessageRequest, PendingRecommendation, RecommendationItem,
    Role, Session, UserProfile,
};
use crate::store::{Asset, Store};
use crate::ServiceError;

const MAX_TEXT: usize = 4_000;

/// Supplies event timestamps; fixed in tests.
pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Default)]
struct SessionLocks {
    /// Serializes writes to one session record.
    write: Mutex<()>,
    /// Held for the duration of an RE task.
    recommend: Mutex<()>,
}

/// The UserAgent: sessions, profiles and map assets over the agent
/// orchestrator.
pub struct SessionService {
    store: Store,
    orchestrator: Orchestrator,
    dataset: Option<Arc<Dataset>>,
    instances: InstanceConfig,
    clock: Clock,
    locks: Mutex<HashMap<String, Arc<SessionLocks>>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl SessionService {
    pub fn new(store: Store, orchestrator: Orchestrator, dataset: Option<Arc<Dataset>>) -> Self {
        Self {
            store,
            orchestrator,
            dataset,
            instances: InstanceConfig::default(),
            clock: Arc::new(Utc::now),
            locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_instance_config(mut self, config: InstanceConfig) -> Self {
        self.instances = config;
        self
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    fn session_locks(&self, id: &str) -> Arc<SessionLocks> {
        lock(&self.locks).entry(id.to_owned()).or_default().clone()
    }

    fn dataset(&self) -> Result<&Dataset, ServiceError> {
        self.dataset.as_deref().ok_or_else(|| ServiceError::State("the service has no dataset loaded".into()))
    }

    /// The user's latest `L` check-ins, oldest first.
    fn primed_history(&self, profile: &UserProfile) -> Result<Vec<HistoryRecord>, ServiceError> {
        let Some(user) = &profile.linked_user_id else {
            return Ok(Vec::new());
        };
        let ds = self.dataset()?;
        let trajectories = ds
            .users
            .get(user)
            .ok_or_else(|| ServiceError::NotFound(format!("dataset user {user}")))?;
        let all: Vec<HistoryRecord> = trajectories
            .iter()
            .flat_map(|t| t.checkins.iter())
            .map(|c| HistoryRecord {
                poi_id: c.poi_id.clone(),
                category: ds.poi(c.poi_id.as_str()).map(|p| p.category.clone()).unwrap_or_default(),
                timestamp: c.timestamp,
            })
            .collect();
        let skip = all.len().saturating_sub(self.instances.long_term_length);
        Ok(all[skip..].to_vec())
    }

    pub fn create_session(&self, req: CreateSessionRequest) -> Result<Session, ServiceError> {
        let stored = match &req.user_id {
            Some(id) => self.store.profile(id)?,
            None => None,
        };
        let base = stored.unwrap_or_else(|| UserProfile {
            user_id: req.user_id.clone().unwrap_or_else(|| uuid::Uuid::new_v4().to_string()),
            display_name: "guest".into(),
            linked_user_id: None,
            preferences: String::new(),
        });
        let profile = UserProfile {
            user_id: base.user_id,
            display_name: req.display_name.unwrap_or(base.display_name),
            linked_user_id: req.linked_user_id.or(base.linked_user_id),
            preferences: req.preferences.unwrap_or(base.preferences),
        };
        if profile.user_id.trim().is_empty() || profile.display_name.trim().is_empty() {
            return Err(ServiceError::BadRequest("user id and display name must not be blank".into()));
        }
        if profile.preferences.len() > MAX_TEXT || profile.display_name.len() > 200 {
            return Err(ServiceError::BadRequest("profile text too long".into()));
        }
        let long_term = self.primed_history(&profile)?;
        self.store.put_profile(&profile)?;
        let session = Session {
            session_id: uuid::Uuid::new_v4().to_string(),
            profile,
            created_at: (self.clock)(),
            location: long_term.last().map(|r| r.poi_id.clone()),
            long_term,
            recent: Vec::new(),
            events: Vec::new(),
            pending: None,
            confirmed: None,
        };
        self.store.put_session(&session)?;
        tracing::info!(session = %session.session_id, user = %session.profile.user_id, "session created");
        Ok(session)
    }

    /// A consistent snapshot of the session.
    pub fn get_session(&self, id: &str) -> Result<Session, ServiceError> {
        self.store.session(id)?.ok_or_else(|| ServiceError::NotFound(format!("session {id}")))
    }

    pub fn get_map_asset(&self, id: &str) -> Result<Asset, ServiceError> {
        self.store.asset(id)?.ok_or_else(|| ServiceError::NotFound(format!("asset {id}")))
    }

    /// Loads, checks and updates the session under its write lock.
    fn mutate<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Session, DateTime<Utc>) -> Result<T, ServiceError>,
    ) -> Result<T, ServiceError> {
        let locks = self.session_locks(id);
        let _w = lock(&locks.write);
        let mut session = self.get_session(id)?;
        let out = f(&mut session, (self.clock)())?;
        self.store.put_session(&session)?;
        Ok(out)
    }

    fn log_request(&self, id: &str, message: &MessageRequest) -> Result<(), ServiceError> {
        self.mutate(id, |s, now| {
            push(s, now, Role::User, None, EventBody::Request { message: message.clone() });
            Ok(())
        })
    }

    fn agent_failure(&self, id: &str, e: AttributedError) -> ServiceError {
        let message = e.error.to_string();
        let logged = self.mutate(id, |s, now| {
            push(s, now, Role::Agent, Some(e.agent), EventBody::Error { agent: e.agent, message: message.clone() });
            Ok(())
        });
        if let Err(le) = logged {
            tracing::error!(session = id, "could not log agent failure: {le}");
        }
        ServiceError::Agent { agent: e.agent, message }
    }

    /// Handles one user message and returns the resulting agent event.
    pub fn post_message(&self, id: &str, message: MessageRequest) -> Result<Event, ServiceError> {
        let snapshot = self.get_session(id)?;
        match message {
            MessageRequest::Recommend { ref location } => {
                let locks = self.session_locks(id);
                let _gate = match locks.recommend.try_lock() {
                    Ok(g) => g,
                    Err(TryLockError::WouldBlock) => {
                        return Err(ServiceError::Busy("a recommendation is already running for this session".into()))
                    }
                    Err(TryLockError::Poisoned(p)) => p.into_inner(),
                };
                let location = location
                    .clone()
                    .or_else(|| snapshot.location.clone())
                    .ok_or_else(|| ServiceError::State("no current location; pass `location`".into()))?;
                let candidates = self.candidates(&location)?;
                let ctx = TaskContext {
                    preferences: snapshot.profile.preferences.clone(),
                    long_term: snapshot.long_term.clone(),
                    recent: snapshot.recent.clone(),
                    candidates: candidates.clone(),
                };
                self.log_request(id, &message)?;
                let out = match self.orchestrator.run_session_step(TaskKind::Re, TaskInput::Recommend(ctx)) {
                    Ok(TaskOutcome::Recommendation(r)) => r,
                    Ok(_) => unreachable!("RE yields a recommendation"),
                    Err(e) => return Err(self.agent_failure(id, e)),
                };
                let items = items(&out.recommendation.ranked_poi_ids, &candidates);
                self.mutate(id, |s, now| {
                    s.pending = Some(PendingRecommendation { list: out.recommendation.clone(), items: items.clone() });
                    s.confirmed = None;
                    s.location = Some(location.clone());
                    Ok(push(
                        s,
                        now,
                        Role::Agent,
                        Some(AgentId::Manager),
                        EventBody::Recommendation {
                            location: location.clone(),
                            list: out.recommendation.clone(),
                            items,
                            refinements: out.transcript.refinements(),
                            accepted_at: out.transcript.accepted_at,
                        },
                    ))
                })
            }
            MessageRequest::Question { ref text } => {
                if text.trim().is_empty() || text.len() > MAX_TEXT {
                    return Err(ServiceError::BadRequest("question must be 1 to 4000 bytes".into()));
                }
                self.log_request(id, &message)?;
                let answer = match self.orchestrator.run_session_step(TaskKind::Qa, TaskInput::Question(text.clone())) {
                    Ok(TaskOutcome::Answer(a)) => a,
                    Ok(_) => unreachable!("QA yields an answer"),
                    Err(e) => return Err(self.agent_failure(id, e)),
                };
                self.mutate(id, |s, now| {
                    Ok(push(
                        s,
                        now,
                        Role::Agent,
                        Some(AgentId::Searcher),
                        EventBody::Answer {
                            question: text.clone(),
                            text: answer.text.clone(),
                            sources: answer.snippets.clone(),
                            failed_tools: answer.failures.iter().map(|(t, _)| t.clone()).collect(),
                        },
                    ))
                })
            }
            MessageRequest::Confirm { ref poi_id } => self.mutate(id, |s, now| {
                let Some(pending) = &s.pending else {
                    return Err(ServiceError::State("nothing to confirm: no pending recommendation".into()));
                };
                if !pending.list.contains(poi_id) {
                    return Err(ServiceError::State(format!("{poi_id} is not in the pending recommendation")));
                }
                push(s, now, Role::User, None, EventBody::Request { message: message.clone() });
                s.confirmed = Some(poi_id.clone());
                Ok(push(s, now, Role::Agent, Some(AgentId::UserAgent), EventBody::Confirmed {
                    poi_id: poi_id.clone(),
                }))
            }),
            MessageRequest::Navigate { ref origin, mode } => {
                let destination = snapshot
                    .confirmed
                    .clone()
                    .ok_or_else(|| ServiceError::State("confirm a POI before navigating".into()))?;
                let ds = self.dataset()?;
                let dest_poi = ds
                    .poi(destination.as_str())
                    .ok_or_else(|| ServiceError::NotFound(format!("POI {destination}")))?;
                let origin = match origin {
                    Some(RouteOrigin::Point(p)) => RouteOrigin::Point(
                        GeoPoint::new(p.lat, p.lon).map_err(|e| ServiceError::BadRequest(e.to_string()))?,
                    ),
                    Some(o) => o.clone(),
                    None => {
                        let here = snapshot
                            .location
                            .as_ref()
                            .and_then(|l| ds.poi(l.as_str()))
                            .ok_or_else(|| ServiceError::State("no current location; pass `origin`".into()))?;
                        RouteOrigin::Point(GeoPoint::of(here))
                    }
                };
                self.log_request(id, &message)?;
                let input = TaskInput::Navigate {
                    origin,
                    destination: destination.clone(),
                    destination_point: GeoPoint::of(dest_poi),
                    mode,
                };
                let nav = match self.orchestrator.run_session_step(TaskKind::Na, input) {
                    Ok(TaskOutcome::Navigation(n)) => n,
                    Ok(_) => unreachable!("NA yields a route"),
                    Err(e) => return Err(self.agent_failure(id, e)),
                };
                let asset_id = hex::encode(&Sha256::digest(&nav.map.bytes)[..16]);
                self.store.put_asset(
                    &asset_id,
                    &Asset { content_type: nav.map.content_type.clone(), bytes: nav.map.bytes.clone() },
                )?;
                self.mutate(id, |s, now| {
                    Ok(push(
                        s,
                        now,
                        Role::Agent,
                        Some(AgentId::Navigator),
                        EventBody::Navigation {
                            destination: destination.clone(),
                            route: nav.route.clone(),
                            asset_id: asset_id.clone(),
                            content_type: nav.map.content_type.clone(),
                        },
                    ))
                })
            }
        }
    }

    fn candidates(&self, location: &PoiId) -> Result<Vec<CandidatePoi>, ServiceError> {
        let ds = self.dataset()?;
        let here = ds.poi(location.as_str()).ok_or_else(|| ServiceError::NotFound(format!("POI {location}")))?;
        annotate_candidates(here, &ds.pois, self.instances.candidate_set_size, self.instances.earth)
            .map_err(|e| ServiceError::BadRequest(e.to_string()))
    }

    /// Re-issues every user message of `log` in a new session for the
    /// same profile. Failed messages are replayed as failures.
    pub fn replay(&self, log: &Session) -> Result<Session, ServiceError> {
        let fresh = self.create_session(CreateSessionRequest {
            user_id: Some(log.profile.user_id.clone()),
            display_name: Some(log.profile.display_name.clone()),
            linked_user_id: log.profile.linked_user_id.clone(),
            preferences: Some(log.profile.preferences.clone()),
        })?;
        for message in log.requests() {
            if let Err(e) = self.post_message(&fresh.session_id, message.clone()) {
                tracing::debug!(session = %fresh.session_id, "replayed {} failed: {e}", message.kind());
            }
        }
        self.get_session(&fresh.session_id)
    }
}

fn push(s: &mut Session, timestamp: DateTime<Utc>, role: Role, agent: Option<AgentId>, body: EventBody) -> Event {
    let e = Event { seq: s.events.len() as u64, role, agent, timestamp, body };
    s.events.push(e.clone());
    e
}

fn items(ids: &[PoiId], candidates: &[CandidatePoi]) -> Vec<RecommendationItem> {
    ids.iter()
        .enumerate()
        .filter_map(|(i, id)| {
            candidates.iter().find(|c| &c.poi_id == id).map(|c| RecommendationItem {
                rank: i + 1,
                poi_id: id.clone(),
                category: c.category.clone(),
                distance_m: c.distance_to_last,
            })
        })
        .collect()
}
