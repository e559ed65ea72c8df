use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::protocol::first_id_array;
use crate::domain::PoiId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedList {
    pub ids: Vec<PoiId>,
    pub explanation: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no candidate ids recognized in model output")]
pub struct ParseError {
    pub warnings: Vec<String>,
}

fn list_item_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| Regex::new(r"^\s*(?:\d+\s*[.):]|[-*•+])\s+(.+)$").expect("static regex"))
}

fn trim_token(t: &str) -> &str {
    t.trim_matches(|c: char| !(c.is_alphanumeric() || c == '_' || c == '-'))
}

struct Collector<'a> {
    candidates: &'a HashSet<&'a str>,
    k: usize,
    ids: Vec<PoiId>,
    seen: HashSet<String>,
    warnings: Vec<String>,
}

impl Collector<'_> {
    fn offer(&mut self, id: &str) {
        if !self.candidates.contains(id) {
            self.warnings.push(format!("dropped `{id}`: not in the candidate set"));
        } else if !self.seen.insert(id.to_owned()) {
            self.warnings.push(format!("dropped repeated `{id}`"));
        } else if self.ids.len() < self.k {
            self.ids.push(PoiId::new(id));
        }
    }
}

/// Ranked candidate ids from a model reply. A JSON array of ids is preferred;
/// otherwise each numbered or bulleted line contributes its first candidate
/// id. Unknown ids are dropped with a warning, repeats keep their first
/// position and the result is cut to `k`.
pub fn parse_recommendation_text(
    text: &str,
    candidates: &[PoiId],
    k: usize,
) -> Result<ParsedList, ParseError> {
    let set: HashSet<&str> = candidates.iter().map(PoiId::as_str).collect();
    let mut c = Collector { candidates: &set, k, ids: Vec::new(), seen: HashSet::new(), warnings: Vec::new() };

    if let Some((array, span)) = first_id_array(text) {
        for id in &array {
            c.offer(id.trim());
        }
        if !c.ids.is_empty() {
            let rest = format!("{} {}", &text[..span.start], &text[span.end..]);
            let explanation = rest.trim();
            let explanation = explanation.strip_prefix("Explanation:").unwrap_or(explanation).trim();
            return Ok(ParsedList { ids: c.ids, explanation: explanation.to_owned(), warnings: c.warnings });
        }
    }
    for line in text.lines() {
        let Some(caps) = list_item_re().captures(line) else { continue };
        let tokens: Vec<&str> = caps[1].split_whitespace().map(trim_token).filter(|t| !t.is_empty()).collect();
        match tokens.iter().find(|t| set.contains(**t)) {
            Some(id) => c.offer(id),
            None => {
                if let Some(first) = tokens.first() {
                    c.offer(first);
                }
            }
        }
    }
    if c.ids.is_empty() {
        return Err(ParseError { warnings: c.warnings });
    }
    Ok(ParsedList { ids: c.ids, explanation: text.trim().to_owned(), warnings: c.warnings })
}
