//! The agent control plane: Manager allocation and monitoring, the Analyst,
//! the Reflector loop, the Searcher and the session-step orchestrator.

mod analyst;
mod manager;
mod orchestrator;
mod parse;
mod prompt;
pub mod protocol;
mod reflector;
mod searcher;

pub use analyst::{analyst_recommend, generate_list, GeneratedList, TaskContext, REASK_SUFFIX};
pub use manager::{allocate, monitor, AgentAssignment, AgentId, AgentTaskStatus, TaskKind};
pub use orchestrator::{
    AgentBackends, AttributedError, NavigationOutcome, Orchestrator, RecommendOutcome,
    ReflectorSettings, RouteOrigin, TaskInput, TaskOutcome,
};
pub use parse::{parse_recommendation_text, ParseError, ParsedList};
pub use prompt::{render_prompt, PromptTemplate, TemplateError, TemplateName, TemplateSet};
pub use reflector::{
    parse_verdict, refine, reflect, run_reflection_loop, LoopFailure, Reflection,
    ReflectionTranscript, Verdict,
};
pub use searcher::{
    searcher_answer, FixtureWiki, SearchAnswer, SearchTool, Snippet, ToolError, WebSearchStub,
    WikipediaTool,
};

use std::sync::Arc;

use crate::geo::MapError;
use crate::llm::{CompletionRequest, CompletionResult, Gateway, LlmError};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("unusable model output after a re-ask: {message}")]
    Output { message: String, raw: String },
    #[error("every search tool failed: {}", .0.iter().map(|(t, e)| format!("{t}: {e}")).collect::<Vec<_>>().join("; "))]
    ToolsUnavailable(Vec<(String, String)>),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// One agent's view of the gateway: which backend and model it talks to.
#[derive(Clone)]
pub struct LlmHandle {
    pub gateway: Arc<Gateway>,
    pub backend_id: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl LlmHandle {
    pub fn new(gateway: Arc<Gateway>, backend_id: impl Into<String>) -> Self {
        Self {
            gateway,
            backend_id: backend_id.into(),
            model_name: String::new(),
            temperature: 0.0,
            max_output_tokens: 1024,
        }
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model_name = model.into();
        self
    }

    pub fn ask(&self, prompt: &str) -> Result<CompletionResult, LlmError> {
        self.gateway.complete(&CompletionRequest {
            backend_id: self.backend_id.clone(),
            model_name: self.model_name.clone(),
            prompt: prompt.to_owned(),
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
        })
    }
}

impl std::fmt::Debug for LlmHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmHandle")
            .field("backend_id", &self.backend_id)
            .field("model_name", &self.model_name)
            .finish()
    }
}
