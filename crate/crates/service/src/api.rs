//! Request, response and stored-record schemas of the `/v1` API.

use chrono::{DateTime, Utc};
use nextpoi_core::agents::{AgentId, RouteOrigin, Snippet};
use nextpoi_core::geo::{RouteResult, TravelMode};
use nextpoi_core::{HistoryRecord, PoiId, RecommendationList, UserId};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub display_name: String,
    /// Dataset user whose history primes new sessions.
    pub linked_user_id: Option<UserId>,
    /// Free text handed to the Analyst.
    pub preferences: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateSessionRequest {
    /// Reuses the stored profile with this id, or names a new one.
    pub user_id: Option<String>,
    pub display_name: Option<String>,
    pub linked_user_id: Option<UserId>,
    pub preferences: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session_id: String,
    pub session: Session,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MessageRequest {
    /// Ranks candidates around `location`, or the session's current POI.
    Recommend {
        #[serde(default)]
        location: Option<PoiId>,
    },
    Question { text: String },
    Confirm { poi_id: PoiId },
    /// Routes to the confirmed POI from `origin`, or from the current POI.
    Navigate {
        #[serde(default)]
        origin: Option<RouteOrigin>,
        #[serde(default = "default_mode")]
        mode: TravelMode,
    },
}

fn default_mode() -> TravelMode {
    TravelMode::Walk
}

impl MessageRequest {
    pub fn kind(&self) -> &'static str {
        match self {
            MessageRequest::Recommend { .. } => "recommend",
            MessageRequest::Question { .. } => "question",
            MessageRequest::Confirm { .. } => "confirm",
            MessageRequest::Navigate { .. } => "navigate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationItem {
    pub rank: usize,
    pub poi_id: PoiId,
    pub category: String,
    pub distance_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventBody {
    Request { message: MessageRequest },
    Recommendation {
        location: PoiId,
        list: RecommendationList,
        items: Vec<RecommendationItem>,
        refinements: usize,
        accepted_at: Option<usize>,
    },
    Answer { question: String, text: String, sources: Vec<Snippet>, failed_tools: Vec<String> },
    Confirmed { poi_id: PoiId },
    Navigation { destination: PoiId, route: RouteResult, asset_id: String, content_type: String },
    Error { agent: AgentId, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub role: Role,
    /// Agent that produced the event; absent for user events.
    pub agent: Option<AgentId>,
    pub timestamp: DateTime<Utc>,
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingRecommendation {
    pub list: RecommendationList,
    pub items: Vec<RecommendationItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub profile: UserProfile,
    pub created_at: DateTime<Utc>,
    /// History the recommendations are conditioned on.
    pub long_term: Vec<HistoryRecord>,
    pub recent: Vec<HistoryRecord>,
    /// POI the user is currently at.
    pub location: Option<PoiId>,
    pub events: Vec<Event>,
    pub pending: Option<PendingRecommendation>,
    pub confirmed: Option<PoiId>,
}

impl Session {
    pub fn requests(&self) -> impl Iterator<Item = &MessageRequest> {
        self.events.iter().filter_map(|e| match &e.body {
            EventBody::Request { message } => Some(message),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDetail {
    /// `not_found`, `state`, `busy`, `bad_request`, `unauthorized`, `agent`, `storage`.
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub agent: Option<AgentId>,
}
