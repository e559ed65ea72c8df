use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::protocol::{query_block, snippets_block};
use super::{AgentError, LlmHandle, TemplateName, TemplateSet};
use crate::http::{HttpRequest, HttpTransport, UreqTransport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub tool: String,
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ToolError(pub String);

pub trait SearchTool: Send + Sync {
    fn name(&self) -> &str;
    /// One line telling the model what the tool looks up.
    fn description(&self) -> &str;
    fn search(&self, query: &str) -> Result<Vec<Snippet>, ToolError>;
}

fn normalize(s: &str) -> String {
    s.chars()
        .filter_map(|c| if c.is_alphanumeric() { Some(c.to_ascii_lowercase()) } else if c.is_whitespace() { Some(' ') } else { None })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Both directions, so "tell me about central park" finds "Central Park".
fn matches(query: &str, title: &str) -> bool {
    let (q, t) = (normalize(query), normalize(title));
    !q.is_empty() && (q.contains(&t) || t.contains(&q))
}

#[derive(Debug, Deserialize)]
struct Fixtures {
    wiki: Vec<WikiPage>,
    web: Vec<WebResult>,
}

#[derive(Debug, Clone, Deserialize)]
struct WikiPage {
    title: String,
    extract: String,
}

#[derive(Debug, Clone, Deserialize)]
struct WebResult {
    query: String,
    title: String,
    text: String,
}

fn bundled_fixtures() -> Fixtures {
    serde_json::from_str(include_str!("../../data/search_fixtures.json")).expect("bundled search fixtures")
}

/// Encyclopedia lookup over a fixed page table.
pub struct FixtureWiki {
    pages: Vec<WikiPage>,
}

impl FixtureWiki {
    pub fn bundled() -> Self {
        Self { pages: bundled_fixtures().wiki }
    }

    pub fn new(pages: impl IntoIterator<Item = (String, String)>) -> Self {
        Self { pages: pages.into_iter().map(|(title, extract)| WikiPage { title, extract }).collect() }
    }
}

impl SearchTool for FixtureWiki {
    fn name(&self) -> &str {
        "wiki"
    }

    fn description(&self) -> &str {
        "encyclopedia summary of a named place"
    }

    fn search(&self, query: &str) -> Result<Vec<Snippet>, ToolError> {
        Ok(self
            .pages
            .iter()
            .filter(|p| matches(query, &p.title))
            .map(|p| Snippet { tool: self.name().into(), title: p.title.clone(), text: p.extract.clone() })
            .collect())
    }
}

/// Canned web results; can be told to fail for outage tests.
pub struct WebSearchStub {
    results: Vec<WebResult>,
    failure: Option<String>,
}

impl WebSearchStub {
    pub fn bundled() -> Self {
        Self { results: bundled_fixtures().web, failure: None }
    }

    pub fn failing(message: impl Into<String>) -> Self {
        Self { results: Vec::new(), failure: Some(message.into()) }
    }
}

impl SearchTool for WebSearchStub {
    fn name(&self) -> &str {
        "web"
    }

    fn description(&self) -> &str {
        "web search results: opening hours, visitor information"
    }

    fn search(&self, query: &str) -> Result<Vec<Snippet>, ToolError> {
        if let Some(m) = &self.failure {
            return Err(ToolError(m.clone()));
        }
        Ok(self
            .results
            .iter()
            .filter(|r| matches(query, &r.query))
            .map(|r| Snippet { tool: self.name().into(), title: r.title.clone(), text: r.text.clone() })
            .collect())
    }
}

/// Page summaries from the live Wikipedia REST API.
pub struct WikipediaTool {
    base_url: String,
    transport: Arc<dyn HttpTransport>,
}

impl WikipediaTool {
    pub fn new() -> Self {
        Self::with_transport("https://en.wikipedia.org", Arc::new(UreqTransport::new(Duration::from_secs(20))))
    }

    pub fn with_transport(base_url: impl Into<String>, transport: Arc<dyn HttpTransport>) -> Self {
        Self { base_url: base_url.into(), transport }
    }
}

impl Default for WikipediaTool {
    fn default() -> Self {
        Self::new()
    }
}

impl SearchTool for WikipediaTool {
    fn name(&self) -> &str {
        "wikipedia"
    }

    fn description(&self) -> &str {
        "Wikipedia page summary for the query as a page title"
    }

    fn search(&self, query: &str) -> Result<Vec<Snippet>, ToolError> {
        let title = query.trim().replace(' ', "_");
        let mut url = url::Url::parse(&self.base_url).map_err(|e| ToolError(e.to_string()))?;
        url.path_segments_mut()
            .map_err(|_| ToolError("base url cannot have a path".into()))?
            .extend(["api", "rest_v1", "page", "summary", &title]);
        let response =
            self.transport.send(&HttpRequest::get(url.as_str())).map_err(|e| ToolError(e.to_string()))?;
        if response.status == 404 {
            return Ok(Vec::new());
        }
        if !response.is_success() {
            return Err(ToolError(format!("status {}", response.status)));
        }
        let v: serde_json::Value =
            serde_json::from_slice(&response.body).map_err(|e| ToolError(format!("bad summary JSON: {e}")))?;
        let text = v["extract"].as_str().unwrap_or_default().trim();
        if text.is_empty() {
            return Ok(Vec::new());
        }
        Ok(vec![Snippet {
            tool: self.name().into(),
            title: v["title"].as_str().unwrap_or(query).to_owned(),
            text: text.to_owned(),
        }])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchAnswer {
    pub query: String,
    /// Model summary followed by a `Sources:` list.
    pub text: String,
    pub snippets: Vec<Snippet>,
    pub failures: Vec<(String, String)>,
    pub prompt: String,
    pub from_cache: bool,
}

/// Queries every tool, then has the model summarize the retrieved passages.
pub fn searcher_answer(
    query: &str,
    tools: &[Arc<dyn SearchTool>],
    templates: &TemplateSet,
    llm: &LlmHandle,
) -> Result<SearchAnswer, AgentError> {
    if tools.is_empty() {
        return Err(AgentError::Precondition("no search tools registered".into()));
    }
    if query.trim().is_empty() {
        return Err(AgentError::Precondition("question is empty".into()));
    }
    let mut snippets = Vec::new();
    let mut failures = Vec::new();
    for tool in tools {
        match tool.search(query) {
            Ok(found) => snippets.extend(found),
            Err(e) => {
                tracing::warn!(tool = tool.name(), "search tool failed: {e}");
                failures.push((tool.name().to_owned(), e.0));
            }
        }
    }
    if failures.len() == tools.len() {
        return Err(AgentError::ToolsUnavailable(failures));
    }
    let tool_lines = tools
        .iter()
        .map(|t| format!("- {}: {}", t.name(), t.description()))
        .collect::<Vec<_>>()
        .join("\n");
    let pairs: Vec<(String, String)> =
        snippets.iter().map(|s| (s.tool.clone(), format!("{}: {}", s.title, s.text))).collect();
    let prompt = templates.render(
        TemplateName::PSe,
        &[("query", &query_block(query)), ("tools", &tool_lines), ("snippets", &snippets_block(&pairs))],
    )?;
    let reply = llm.ask(&prompt)?;
    let mut text = reply.text.trim_end().to_owned();
    if !snippets.is_empty() {
        text.push_str("\n\nSources:");
        for s in &snippets {
            text.push_str(&format!("\n- [{}] {}", s.tool, s.title));
        }
    }
    Ok(SearchAnswer {
        query: query.to_owned(),
        text,
        snippets,
        failures,
        prompt,
        from_cache: reply.from_cache,
    })
}
