use serde::{Deserialize, Serialize};

use super::parse::parse_recommendation_text;
use super::protocol::{candidates_block, history_block};
use super::{AgentError, LlmHandle, TemplateName, TemplateSet};
use crate::domain::{CandidatePoi, EvalInstance, HistoryRecord, PoiId, RecommendationList};

/// Appended to the prompt when the first reply could not be parsed.
pub const REASK_SUFFIX: &str = "\n\nYour previous answer could not be read. Reply again, starting with a JSON array of candidate ids on the first line.";

/// Everything the Manager hands the Analyst for one recommendation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskContext {
    pub preferences: String,
    pub long_term: Vec<HistoryRecord>,
    pub recent: Vec<HistoryRecord>,
    pub candidates: Vec<CandidatePoi>,
}

impl TaskContext {
    pub fn from_instance(instance: &EvalInstance) -> Self {
        Self {
            preferences: String::new(),
            long_term: instance.long_term.clone(),
            recent: instance.recent.clone(),
            candidates: instance.candidates.clone(),
        }
    }

    pub fn candidate_ids(&self) -> Vec<PoiId> {
        self.candidates.iter().map(|c| c.poi_id.clone()).collect()
    }

    /// The task context `x`, rendered through `p_m`.
    pub fn render(&self, templates: &TemplateSet) -> Result<String, AgentError> {
        let prefs = self.preferences.trim();
        let prefs = if prefs.is_empty() { "none" } else { prefs };
        Ok(templates.render(
            TemplateName::PM,
            &[
                ("preferences", prefs),
                ("history", &history_block(&self.long_term, &self.recent)),
                ("candidates", &candidates_block(&self.candidates)),
            ],
        )?)
    }
}

/// One ranking produced by a model, with the exact prompt and reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedList {
    pub prompt: String,
    pub raw: String,
    pub list: RecommendationList,
    pub warnings: Vec<String>,
    pub reasked: bool,
    pub from_cache: bool,
}

/// Asks for a ranking, re-asking once if the reply has no usable ids.
pub fn generate_list(
    prompt: String,
    candidates: &[PoiId],
    k: usize,
    llm: &LlmHandle,
) -> Result<GeneratedList, AgentError> {
    let mut prompt = prompt;
    let mut reasked = false;
    loop {
        let reply = llm.ask(&prompt)?;
        match parse_recommendation_text(&reply.text, candidates, k) {
            Ok(parsed) => {
                for w in &parsed.warnings {
                    tracing::warn!("model output: {w}");
                }
                return Ok(GeneratedList {
                    prompt,
                    list: RecommendationList { ranked_poi_ids: parsed.ids, explanation: parsed.explanation },
                    raw: reply.text,
                    warnings: parsed.warnings,
                    reasked,
                    from_cache: reply.from_cache,
                });
            }
            Err(e) if reasked => {
                return Err(AgentError::Output { message: e.to_string(), raw: reply.text });
            }
            Err(_) => {
                tracing::warn!("unparseable model output, asking once more");
                prompt.push_str(REASK_SUFFIX);
                reasked = true;
            }
        }
    }
}

/// Initial ranking `y_0` over the context's candidates.
pub fn analyst_recommend(
    x: &str,
    candidates: &[PoiId],
    templates: &TemplateSet,
    llm: &LlmHandle,
    k: usize,
) -> Result<GeneratedList, AgentError> {
    if candidates.is_empty() {
        return Err(AgentError::Precondition("no candidate POIs to rank".into()));
    }
    let top_k = k.to_string();
    let prompt = templates.render(TemplateName::PAn, &[("context", x), ("top_k", &top_k)])?;
    generate_list(prompt, candidates, k, llm)
}
