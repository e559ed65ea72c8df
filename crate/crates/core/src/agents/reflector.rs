use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::analyst::{generate_list, GeneratedList};
use super::protocol::{attempt_block, reflection_block};
use super::{AgentError, LlmHandle, TemplateName, TemplateSet};
use crate::domain::{PoiId, RecommendationList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Accept,
    Revise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflection {
    pub index: usize,
    pub prompt: String,
    pub text: String,
    pub verdict: Verdict,
    pub warning: Option<String>,
    pub from_cache: bool,
}

/// The `VERDICT:` token, or REVISE with a warning when it is missing.
pub fn parse_verdict(text: &str) -> (Verdict, Option<String>) {
    static R: OnceLock<Regex> = OnceLock::new();
    let re = R.get_or_init(|| {
        Regex::new(r"(?i)\bVERDICT\s*[:=]\s*[*_`]*\s*(ACCEPT|REVISE)\b").expect("static regex")
    });
    match re.captures(text) {
        Some(c) if c[1].eq_ignore_ascii_case("ACCEPT") => (Verdict::Accept, None),
        Some(_) => (Verdict::Revise, None),
        None => (Verdict::Revise, Some("reflection has no VERDICT token; treating it as REVISE".into())),
    }
}

/// `Ref_i` for attempt `y_i`.
pub fn reflect(
    x: &str,
    index: usize,
    attempt: &GeneratedList,
    templates: &TemplateSet,
    llm: &LlmHandle,
    k: usize,
) -> Result<Reflection, AgentError> {
    let top_k = k.to_string();
    let prompt = templates.render(
        TemplateName::PTh,
        &[("context", x), ("attempt", &attempt_block(index, &attempt.raw)), ("top_k", &top_k)],
    )?;
    let reply = llm.ask(&prompt)?;
    let (verdict, warning) = parse_verdict(&reply.text);
    if let Some(w) = &warning {
        tracing::warn!(index, "{w}");
    }
    Ok(Reflection { index, prompt, text: reply.text, verdict, warning, from_cache: reply.from_cache })
}

/// `y_{i+1}` from the full record `y_0, Ref_0, …, y_i, Ref_i`.
pub fn refine(
    x: &str,
    outputs: &[GeneratedList],
    reflections: &[Reflection],
    templates: &TemplateSet,
    llm: &LlmHandle,
    candidates: &[PoiId],
    k: usize,
) -> Result<GeneratedList, AgentError> {
    if reflections.is_empty() || outputs.len() != reflections.len() {
        return Err(AgentError::Precondition(format!(
            "refine needs matching attempts and reflections, got {} and {}",
            outputs.len(),
            reflections.len()
        )));
    }
    let trials = outputs
        .iter()
        .zip(reflections)
        .enumerate()
        .map(|(i, (y, r))| format!("{}\n{}", attempt_block(i, &y.raw), reflection_block(i, &r.text)))
        .collect::<Vec<_>>()
        .join("\n");
    let top_k = k.to_string();
    let prompt = templates.render(
        TemplateName::PRe,
        &[("context", x), ("trials", &trials), ("top_k", &top_k)],
    )?;
    generate_list(prompt, candidates, k, llm)
}

/// The full record of one reflection loop.
///
/// `outputs` holds `y_0 … y_m` and `reflections` holds `Ref_0 …`; there is
/// one reflection per output except when the loop ran out of budget, in
/// which case the last output was never reviewed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionTranscript {
    pub input: String,
    pub limit: usize,
    pub outputs: Vec<GeneratedList>,
    pub reflections: Vec<Reflection>,
    /// Index of the reflection whose ACCEPT ended the loop.
    pub accepted_at: Option<usize>,
}

impl ReflectionTranscript {
    pub fn new(input: String, limit: usize, y0: GeneratedList) -> Self {
        Self { input, limit, outputs: vec![y0], reflections: Vec::new(), accepted_at: None }
    }

    /// `ŷ`: the last output produced.
    pub fn final_output(&self) -> &GeneratedList {
        self.outputs.last().expect("transcript always holds y_0")
    }

    /// The recommendation a loop limited to `j` iterations would return.
    pub fn state(&self, j: usize) -> &RecommendationList {
        &self.outputs[j.min(self.outputs.len() - 1)].list
    }

    pub fn refinements(&self) -> usize {
        self.outputs.len() - 1
    }
}

#[derive(Debug)]
pub struct LoopFailure {
    pub transcript: ReflectionTranscript,
    pub error: AgentError,
}

/// Alternates reflection and refinement for at most `n` rounds. An ACCEPT
/// verdict stops the loop before any further refine; otherwise every round
/// ends with a refined output, so `ŷ` is `y_n` when nothing is accepted.
pub fn run_reflection_loop(
    x: &str,
    y0: GeneratedList,
    n: usize,
    templates: &TemplateSet,
    llm: &LlmHandle,
    candidates: &[PoiId],
    k: usize,
) -> Result<ReflectionTranscript, Box<LoopFailure>> {
    let mut t = ReflectionTranscript::new(x.to_owned(), n, y0);
    for i in 0..n {
        let reflection = match reflect(x, i, &t.outputs[i], templates, llm, k) {
            Ok(r) => r,
            Err(error) => return Err(Box::new(LoopFailure { transcript: t, error })),
        };
        let accepted = reflection.verdict == Verdict::Accept;
        t.reflections.push(reflection);
        if accepted {
            t.accepted_at = Some(i);
            break;
        }
        match refine(x, &t.outputs, &t.reflections, templates, llm, candidates, k) {
            Ok(y) => t.outputs.push(y),
            Err(error) => return Err(Box::new(LoopFailure { transcript: t, error })),
        }
    }
    Ok(t)
}
