use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::analyst::{analyst_recommend, TaskContext};
use super::manager::{allocate, monitor, AgentId, AgentTaskStatus, TaskKind};
use super::reflector::{run_reflection_loop, ReflectionTranscript};
use super::searcher::{searcher_answer, SearchAnswer, SearchTool};
use super::{AgentError, LlmHandle, TemplateSet};
use crate::domain::{PoiId, RecommendationList};
use crate::geo::{geocode, plan_route, render_static_map, GeoPoint, MapImage, MappingClient, RouteResult, TravelMode};

#[derive(Debug, Clone)]
pub struct AgentBackends {
    pub analyst: LlmHandle,
    pub reflector: LlmHandle,
    pub searcher: LlmHandle,
}

impl AgentBackends {
    pub fn shared(handle: LlmHandle) -> Self {
        Self { analyst: handle.clone(), reflector: handle.clone(), searcher: handle }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectorSettings {
    pub enabled: bool,
    /// `N`: reflection rounds.
    pub iterations: usize,
}

impl Default for ReflectorSettings {
    fn default() -> Self {
        Self { enabled: true, iterations: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteOrigin {
    Address(String),
    Point(GeoPoint),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskInput {
    Recommend(TaskContext),
    Question(String),
    Navigate { origin: RouteOrigin, destination: PoiId, destination_point: GeoPoint, mode: TravelMode },
}

impl TaskInput {
    fn kind(&self) -> TaskKind {
        match self {
            TaskInput::Recommend(_) => TaskKind::Re,
            TaskInput::Question(_) => TaskKind::Qa,
            TaskInput::Navigate { .. } => TaskKind::Na,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendOutcome {
    /// `ŷ`, or `y_0` when the Reflector is off.
    pub recommendation: RecommendationList,
    pub transcript: ReflectionTranscript,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NavigationOutcome {
    pub destination: PoiId,
    pub route: RouteResult,
    pub map: MapImage,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskOutcome {
    Recommendation(RecommendOutcome),
    Answer(SearchAnswer),
    Navigation(NavigationOutcome),
}

/// A failure tagged with the agent it came from. Reflection failures keep
/// the partial transcript.
#[derive(Debug)]
pub struct AttributedError {
    pub agent: AgentId,
    pub error: AgentError,
    pub transcript: Option<Box<ReflectionTranscript>>,
}

impl AttributedError {
    fn new(agent: AgentId, error: AgentError) -> Self {
        Self { agent, error, transcript: None }
    }
}

impl fmt::Display for AttributedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.agent, self.error)
    }
}

impl std::error::Error for AttributedError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Binds the agents for one deployment: templates, model handles, search
/// tools and the mapping client.
#[derive(Clone)]
pub struct Orchestrator {
    pub templates: Arc<TemplateSet>,
    pub backends: AgentBackends,
    pub reflector: ReflectorSettings,
    pub top_k: usize,
    pub tools: Vec<Arc<dyn SearchTool>>,
    pub mapping: Option<Arc<dyn MappingClient>>,
}

impl Orchestrator {
    pub fn new(templates: Arc<TemplateSet>, backends: AgentBackends) -> Self {
        Self {
            templates,
            backends,
            reflector: ReflectorSettings::default(),
            top_k: 10,
            tools: Vec::new(),
            mapping: None,
        }
    }

    /// Readiness of each stage the task depends on.
    fn statuses(&self, input: &TaskInput) -> Vec<AgentTaskStatus> {
        let st = |agent_id, complete| AgentTaskStatus { agent_id, complete };
        match input {
            TaskInput::Recommend(ctx) => vec![
                st(AgentId::UserAgent, true),
                st(AgentId::DataAgent, !ctx.candidates.is_empty()),
            ],
            TaskInput::Question(q) => vec![
                st(AgentId::UserAgent, !q.trim().is_empty()),
                st(AgentId::Searcher, !self.tools.is_empty()),
            ],
            TaskInput::Navigate { .. } => {
                vec![st(AgentId::UserAgent, true), st(AgentId::Navigator, self.mapping.is_some())]
            }
        }
    }

    pub fn run_session_step(&self, task: TaskKind, input: TaskInput) -> Result<TaskOutcome, AttributedError> {
        if input.kind() != task {
            return Err(AttributedError::new(
                AgentId::Manager,
                AgentError::Config(format!("{task} task given {} input", input.kind())),
            ));
        }
        let assignment = allocate(task);
        let statuses = self.statuses(&input);
        if monitor(&statuses) == 0 {
            let pending = statuses.iter().find(|s| !s.complete).expect("monitor is 0").agent_id;
            return Err(AttributedError::new(
                pending,
                AgentError::Precondition(format!("{pending} has not completed its stage for {task}")),
            ));
        }
        match input {
            TaskInput::Recommend(ctx) => {
                let use_reflector = self.reflector.enabled && assignment.involves(AgentId::Reflector);
                self.recommend(&ctx, use_reflector).map(TaskOutcome::Recommendation)
            }
            TaskInput::Question(q) => searcher_answer(&q, &self.tools, &self.templates, &self.backends.searcher)
                .map(TaskOutcome::Answer)
                .map_err(|e| AttributedError::new(AgentId::Searcher, e)),
            TaskInput::Navigate { origin, destination, destination_point, mode } => self
                .navigate(origin, destination, destination_point, mode)
                .map(TaskOutcome::Navigation)
                .map_err(|e| AttributedError::new(AgentId::Navigator, e)),
        }
    }

    fn recommend(&self, ctx: &TaskContext, use_reflector: bool) -> Result<RecommendOutcome, AttributedError> {
        let x = ctx.render(&self.templates).map_err(|e| AttributedError::new(AgentId::Manager, e))?;
        let candidates = ctx.candidate_ids();
        let y0 = analyst_recommend(&x, &candidates, &self.templates, &self.backends.analyst, self.top_k)
            .map_err(|e| AttributedError::new(AgentId::Analyst, e))?;
        if !use_reflector {
            let transcript = ReflectionTranscript::new(x, 0, y0);
            return Ok(RecommendOutcome { recommendation: transcript.final_output().list.clone(), transcript });
        }
        match run_reflection_loop(
            &x,
            y0,
            self.reflector.iterations,
            &self.templates,
            &self.backends.reflector,
            &candidates,
            self.top_k,
        ) {
            Ok(transcript) => {
                Ok(RecommendOutcome { recommendation: transcript.final_output().list.clone(), transcript })
            }
            Err(f) => Err(AttributedError { agent: AgentId::Reflector, error: f.error, transcript: Some(Box::new(f.transcript)) }),
        }
    }

    fn navigate(
        &self,
        origin: RouteOrigin,
        destination: PoiId,
        destination_point: GeoPoint,
        mode: TravelMode,
    ) -> Result<NavigationOutcome, AgentError> {
        let client = self.mapping.as_deref().ok_or_else(|| AgentError::Precondition("no mapping client".into()))?;
        let origin = match origin {
            RouteOrigin::Address(a) => geocode(&a, client)?,
            RouteOrigin::Point(p) => p,
        };
        let mut route = plan_route(origin, destination_point, mode, client)?;
        let map = render_static_map(&route, client)?;
        route.map_ref = Some(map.map_ref.clone());
        Ok(NavigationOutcome { destination, route, map })
    }
}
