//! Interactive sessions (recommend, ask, confirm, navigate) over a JSON
//! HTTP API. Profiles, sessions and rendered maps live in one embedded
//! database file.
//!
//! | method | path                          | body                      | reply                     |
//! |--------|-------------------------------|---------------------------|---------------------------|
//! | POST   | `/v1/sessions`                | [`CreateSessionRequest`]  | 201 [`CreateSessionResponse`] |
//! | POST   | `/v1/sessions/{id}/messages`  | [`MessageRequest`]        | 200 [`Event`]             |
//! | GET    | `/v1/sessions/{id}`           |                           | 200 [`Session`]           |
//! | GET    | `/v1/assets/{id}`             |                           | 200 image bytes           |
//!
//! Errors reply with an [`ErrorBody`]. Example payloads live in
//! `fixtures/api/`.

pub mod api;
mod http;
mod service;
mod store;

pub use api::{
    CreateSessionRequest, CreateSessionResponse, ErrorBody, ErrorDetail, Event, EventBody, MessageRequest,
    PendingRecommendation, RecommendationItem, Role, Session, UserProfile,
};
pub use http::{router, serve, ServerOptions};
pub use service::{Clock, SessionService};
pub use store::{Asset, Store};

use nextpoi_core::agents::AgentId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ServiceError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("{0}")]
    State(String),
    #[error("{0}")]
    Busy(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("{agent}: {message}")]
    Agent { agent: AgentId, message: String },
    #[error("storage: {0}")]
    Storage(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::State(_) => "state",
            ServiceError::Busy(_) => "busy",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Agent { .. } => "agent",
            ServiceError::Storage(_) => "storage",
        }
    }
}
