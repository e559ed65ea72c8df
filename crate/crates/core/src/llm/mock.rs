use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Mutex;

use super::{rough_tokens, BackendError, BackendReply, CompletionRequest, LlmBackend, TokenCounts};
use crate::agents::protocol::{
    self, block, blocks, parse_candidates, parse_history, CandidateLine, HistoryLine,
    HistorySection, PromptTask,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptEntry {
    Reply(String),
    Fail(BackendError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockScript {
    /// Replies consumed in order, one per call.
    Scripted(Vec<ScriptEntry>),
    /// Reads the prompt and answers by fixed rules:
    ///
    /// * Analyst: candidates ranked by how often their category occurs in
    ///   the history, then by ascending distance, then by id.
    /// * Refine: candidates ranked by how often the POI itself occurs in the
    ///   long-term history, then as for the Analyst.
    /// * Reflect: ACCEPT when the attempt already equals the refine ranking,
    ///   REVISE otherwise.
    /// * Search: each snippet restated with its tool attribution.
    Heuristic,
}

pub struct MockBackend {
    script: MockScript,
    cursor: Mutex<usize>,
    calls: Mutex<Vec<String>>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        Self { script, cursor: Mutex::new(0), calls: Mutex::new(Vec::new()) }
    }

    pub fn scripted<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self::new(MockScript::Scripted(
            replies.into_iter().map(|r| ScriptEntry::Reply(r.into())).collect(),
        ))
    }

    pub fn scripted_entries(entries: Vec<ScriptEntry>) -> Self {
        Self::new(MockScript::Scripted(entries))
    }

    pub fn heuristic() -> Self {
        Self::new(MockScript::Heuristic)
    }

    /// Every prompt received so far, in call order.
    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().expect("mock lock poisoned").clone()
    }
}

impl LlmBackend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError> {
        self.calls.lock().expect("mock lock poisoned").push(request.prompt.clone());
        let text = match &self.script {
            MockScript::Scripted(entries) => {
                let mut cursor = self.cursor.lock().expect("mock lock poisoned");
                let entry = entries.get(*cursor).cloned().ok_or_else(|| BackendError::Rejected {
                    status: 0,
                    message: format!("mock script exhausted after {} replies", entries.len()),
                })?;
                *cursor += 1;
                match entry {
                    ScriptEntry::Reply(text) => text,
                    ScriptEntry::Fail(e) => return Err(e),
                }
            }
            MockScript::Heuristic => heuristic_reply(&request.prompt),
        };
        Ok(BackendReply {
            token_counts: TokenCounts { prompt: rough_tokens(&request.prompt), output: rough_tokens(&text) },
            text,
        })
    }
}

struct Context {
    history: Vec<HistoryLine>,
    candidates: Vec<CandidateLine>,
    k: usize,
}

impl Context {
    fn read(prompt: &str) -> Self {
        Self {
            history: block(prompt, "history").map(parse_history).unwrap_or_default(),
            candidates: block(prompt, "candidates").map(parse_candidates).unwrap_or_default(),
            k: protocol::top_k_of(prompt).unwrap_or(10),
        }
    }

    fn category_counts(&self) -> HashMap<&str, usize> {
        let mut m = HashMap::new();
        for h in &self.history {
            *m.entry(h.category.as_str()).or_default() += 1;
        }
        m
    }

    fn analyst_ranking(&self) -> Vec<&str> {
        let cats = self.category_counts();
        self.ranked(|c| (0, cats.get(c.category.as_str()).copied().unwrap_or(0)))
    }

    fn refine_ranking(&self) -> Vec<&str> {
        let cats = self.category_counts();
        let mut visits: HashMap<&str, usize> = HashMap::new();
        for h in self.history.iter().filter(|h| h.section == HistorySection::LongTerm) {
            *visits.entry(h.poi.as_str()).or_default() += 1;
        }
        self.ranked(|c| {
            (
                visits.get(c.poi.as_str()).copied().unwrap_or(0),
                cats.get(c.category.as_str()).copied().unwrap_or(0),
            )
        })
    }

    /// Candidates by descending `score`, then ascending distance and id.
    fn ranked(&self, score: impl Fn(&CandidateLine) -> (usize, usize)) -> Vec<&str> {
        let mut c: Vec<&CandidateLine> = self.candidates.iter().collect();
        c.sort_by(|a, b| {
            score(b)
                .cmp(&score(a))
                .then_with(|| a.distance_m.partial_cmp(&b.distance_m).unwrap_or(Ordering::Equal))
                .then_with(|| a.poi.cmp(&b.poi))
        });
        c.into_iter().take(self.k).map(|c| c.poi.as_str()).collect()
    }
}

fn ranking_reply(ids: &[&str], explanation: &str) -> String {
    format!("{}\nExplanation: {explanation}", serde_json::to_string(ids).expect("string list"))
}

fn heuristic_reply(prompt: &str) -> String {
    match protocol::task_of(prompt) {
        Some(PromptTask::Analyst) => {
            let ctx = Context::read(prompt);
            ranking_reply(
                &ctx.analyst_ranking(),
                "candidates in the categories this user visits most, nearest first.",
            )
        }
        Some(PromptTask::Refine) => {
            let ctx = Context::read(prompt);
            ranking_reply(
                &ctx.refine_ranking(),
                "places the user has returned to before come first, then favoured categories by distance.",
            )
        }
        Some(PromptTask::Reflect) => {
            let ctx = Context::read(prompt);
            let attempt = blocks(prompt, "attempt").pop().map(|(_, b)| b).unwrap_or("");
            let ids = protocol::first_id_array(attempt).map(|(ids, _)| ids).unwrap_or_default();
            if ids.iter().map(String::as_str).eq(ctx.refine_ranking()) {
                "VERDICT: ACCEPT - the list already puts repeat destinations first.".into()
            } else {
                "VERDICT: REVISE - POIs the user has visited before are ranked too low; move them up.".into()
            }
        }
        Some(PromptTask::Search) => {
            let query = block(prompt, "query").unwrap_or("").trim();
            let snippets = block(prompt, "snippets").map(protocol::parse_snippets).unwrap_or_default();
            if snippets.is_empty() {
                return format!("No sources returned anything about {query}.");
            }
            let mut out = format!("About {query}:\n");
            for (tool, text) in snippets {
                out.push_str(&format!("- {text} [{tool}]\n"));
            }
            out
        }
        None => "I cannot tell what this prompt asks for.".into(),
    }
}
