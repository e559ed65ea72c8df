//! Multi-agent next point-of-interest recommendation.
//!
//! The crate is organised along the pipeline it implements:
//!
//! * [`domain`]: POIs, check-ins, trajectories, datasets and their validation.
//! * [`store`]: the canonical line-delimited dataset serialization.
//! * [`ingest`]: the DataAgent, which parses raw LBSN exports, filters by
//!   support, segments trajectories, splits chronologically and builds
//!   evaluation instances.
//! * [`geo`]: the Navigator, with Haversine distance, candidate annotation
//!   and the live and offline mapping clients.
//! * [`llm`]: the chat-completion gateway with a persistent response cache and
//!   deterministic mock backends.
//! * [`agents`]: Manager, Analyst, Reflector and Searcher, prompt templates and
//!   LLM-output parsing.
//! * [`eval`]: ranking metrics, cold-start grouping and the experiment runner.
//! * [`synthetic`]: a seeded generator for small self-describing fixtures.

pub mod agents;
pub mod domain;
pub mod eval;
pub mod geo;
pub mod http;
pub mod ingest;
pub mod llm;
pub mod store;
pub mod synthetic;
mod sync;

pub use domain::{
    CandidatePoi, CheckIn, Dataset, EvalInstance, HistoryRecord, Poi, PoiId, RecommendationList,
    Split, Trajectory, TrajectoryId, UserId,
};
