//! The text protocol between agents and models.
//!
//! Every prompt carries a `TASK:` line naming its role and, for ranking
//! tasks, a `TOP_K:` line. Structured payloads travel in line-delimited
//! blocks whose opening and closing tags stand on their own lines:
//!
//! ```text
//! <history>
//! ## long-term
//! poi | category | 2012-04-03T18:00:09Z
//! ## recent
//! poi | category | 2012-04-04T09:12:00Z
//! </history>
//! <candidates>
//! poi | 123.4 m | category
//! </candidates>
//! <attempt index=0>
//! ["poi", ...]
//! Explanation: ...
//! </attempt>
//! <reflection index=0>
//! VERDICT: REVISE - ...
//! </reflection>
//! <query>
//! free text
//! </query>
//! <snippets>
//! [tool] title: text
//! </snippets>
//! ```
//!
//! Models are asked to answer ranking tasks with a JSON array of candidate
//! ids followed by an explanation.

use std::fmt::Write as _;
use std::sync::OnceLock;

use chrono::{DateTime, SecondsFormat, Utc};
use regex::Regex;

use crate::domain::{CandidatePoi, HistoryRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptTask {
    Analyst,
    Reflect,
    Refine,
    Search,
}

impl PromptTask {
    pub fn marker(self) -> &'static str {
        match self {
            PromptTask::Analyst => "ANALYST",
            PromptTask::Reflect => "REFLECT",
            PromptTask::Refine => "REFINE",
            PromptTask::Search => "SEARCH",
        }
    }
}

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("static regex"))
}

pub fn task_of(prompt: &str) -> Option<PromptTask> {
    static R: OnceLock<Regex> = OnceLock::new();
    let caps = re(&R, r"(?m)^TASK:\s*([A-Z]+)\s*$").captures(prompt)?;
    [PromptTask::Analyst, PromptTask::Reflect, PromptTask::Refine, PromptTask::Search]
        .into_iter()
        .find(|t| t.marker() == &caps[1])
}

pub fn top_k_of(prompt: &str) -> Option<usize> {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"(?m)^TOP_K:\s*(\d+)\s*$").captures(prompt)?[1].parse().ok()
}

/// Field text made safe for one `|`-separated line.
pub fn clean_field(s: &str) -> String {
    s.chars().map(|c| if c == '|' || c.is_control() { ' ' } else { c }).collect::<String>().trim().to_owned()
}

fn stamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn history_block(long_term: &[HistoryRecord], recent: &[HistoryRecord]) -> String {
    let line = |s: &mut String, r: &HistoryRecord| {
        let _ = writeln!(s, "{} | {} | {}", clean_field(r.poi_id.as_str()), clean_field(&r.category), stamp(r.timestamp));
    };
    let mut s = String::from("<history>\n## long-term\n");
    long_term.iter().for_each(|r| line(&mut s, r));
    s.push_str("## recent\n");
    recent.iter().for_each(|r| line(&mut s, r));
    s.push_str("</history>");
    s
}

pub fn candidates_block(candidates: &[CandidatePoi]) -> String {
    let mut s = String::from("<candidates>\n");
    for c in candidates {
        let _ = writeln!(
            s,
            "{} | {:.1} m | {}",
            clean_field(c.poi_id.as_str()),
            c.distance_to_last,
            clean_field(&c.category)
        );
    }
    s.push_str("</candidates>");
    s
}

pub fn attempt_block(index: usize, raw: &str) -> String {
    format!("<attempt index={index}>\n{}\n</attempt>", raw.trim_end())
}

pub fn reflection_block(index: usize, text: &str) -> String {
    format!("<reflection index={index}>\n{}\n</reflection>", text.trim_end())
}

pub fn query_block(query: &str) -> String {
    format!("<query>\n{}\n</query>", query.trim())
}

pub fn snippets_block(snippets: &[(String, String)]) -> String {
    let mut s = String::from("<snippets>\n");
    for (tool, text) in snippets {
        let _ = writeln!(s, "[{}] {}", clean_field(tool), text.replace(['\r', '\n'], " ").trim());
    }
    s.push_str("</snippets>");
    s
}

/// Bodies of every `<tag ...>` block, with the opening tag's attribute text.
pub fn blocks<'a>(prompt: &'a str, tag: &str) -> Vec<(&'a str, &'a str)> {
    let close = format!("</{tag}>");
    let mut spans = Vec::new();
    let mut offset = 0;
    for line in prompt.split('\n') {
        spans.push((offset, offset + line.len()));
        offset += line.len() + 1;
    }
    let text = |(s, e): (usize, usize)| prompt[s..e].trim_end_matches('\r');
    let mut out = Vec::new();
    let mut i = 0;
    while i < spans.len() {
        let attrs = text(spans[i])
            .strip_prefix('<')
            .and_then(|l| l.strip_prefix(tag))
            .and_then(|l| l.strip_suffix('>'))
            .filter(|a| a.is_empty() || a.starts_with(' '));
        if let Some(attrs) = attrs {
            if let Some(j) = (i + 1..spans.len()).find(|&j| text(spans[j]) == close) {
                let body = if j == i + 1 { "" } else { &prompt[spans[i + 1].0..spans[j - 1].1] };
                out.push((attrs.trim(), body));
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    out
}

pub fn block<'a>(prompt: &'a str, tag: &str) -> Option<&'a str> {
    blocks(prompt, tag).into_iter().next().map(|(_, b)| b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistorySection {
    LongTerm,
    Recent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryLine {
    pub section: HistorySection,
    pub poi: String,
    pub category: String,
}

pub fn parse_history(block: &str) -> Vec<HistoryLine> {
    let mut section = HistorySection::LongTerm;
    let mut out = Vec::new();
    for line in block.lines() {
        match line.trim() {
            "## long-term" => section = HistorySection::LongTerm,
            "## recent" => section = HistorySection::Recent,
            l => {
                let mut parts = l.split(" | ");
                if let (Some(poi), Some(category), Some(_)) = (parts.next(), parts.next(), parts.next()) {
                    out.push(HistoryLine { section, poi: poi.to_owned(), category: category.to_owned() });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateLine {
    pub poi: String,
    pub distance_m: f64,
    pub category: String,
}

pub fn parse_candidates(block: &str) -> Vec<CandidateLine> {
    block
        .lines()
        .filter_map(|l| {
            let mut parts = l.trim().split(" | ");
            let poi = parts.next()?;
            let distance_m = parts.next()?.strip_suffix(" m")?.parse().ok()?;
            let category = parts.next()?;
            Some(CandidateLine { poi: poi.to_owned(), distance_m, category: category.to_owned() })
        })
        .collect()
}

/// `(tool, text)` pairs of a snippets block.
pub fn parse_snippets(block: &str) -> Vec<(String, String)> {
    block
        .lines()
        .filter_map(|l| {
            let l = l.trim().strip_prefix('[')?;
            let (tool, text) = l.split_once("] ")?;
            Some((tool.to_owned(), text.to_owned()))
        })
        .collect()
}

/// The first JSON array in `text` whose elements are all strings or
/// integers, with its byte span.
pub fn first_id_array(text: &str) -> Option<(Vec<String>, std::ops::Range<usize>)> {
    for (start, _) in text.match_indices('[') {
        let mut stream =
            serde_json::Deserializer::from_str(&text[start..]).into_iter::<Vec<serde_json::Value>>();
        if let Some(Ok(values)) = stream.next() {
            let end = start + stream.byte_offset();
            let ids: Option<Vec<String>> = values
                .into_iter()
                .map(|v| match v {
                    serde_json::Value::String(s) => Some(s),
                    serde_json::Value::Number(n) if n.is_u64() || n.is_i64() => Some(n.to_string()),
                    _ => None,
                })
                .collect();
            if let Some(ids) = ids {
                return Some((ids, start..end));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::fixtures::ts;

    fn h(poi: &str, cat: &str) -> HistoryRecord {
        HistoryRecord { poi_id: poi.into(), category: cat.into(), timestamp: ts(0) }
    }

    #[test]
    fn history_round_trip() {
        let b = history_block(&[h("a", "Bar | Pub")], &[h("b", "Park"), h("c", "Park")]);
        assert!(b.contains("a | Bar   Pub | 2012-04-03T00:00:00Z"));
        let prompt = format!("TASK: ANALYST\nTOP_K: 5\n{b}\n");
        let lines = parse_history(block(&prompt, "history").unwrap());
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].section, HistorySection::LongTerm);
        assert_eq!(lines[2].section, HistorySection::Recent);
        assert_eq!(task_of(&prompt), Some(PromptTask::Analyst));
        assert_eq!(top_k_of(&prompt), Some(5));
    }

    #[test]
    fn candidates_round_trip() {
        let c = CandidatePoi { poi_id: "x".into(), distance_to_last: 12.345, category: "Gym".into() };
        let p = candidates_block(&[c]);
        assert_eq!(
            parse_candidates(block(&p, "candidates").unwrap()),
            vec![CandidateLine { poi: "x".into(), distance_m: 12.3, category: "Gym".into() }]
        );
    }

    #[test]
    fn blocks_need_own_lines_and_keep_order() {
        let prompt = "prose mentioning <attempt index=9> inline\n<attempt index=0>\nA\n</attempt>\n<attempt index=1>\nB\nB2\n</attempt>\n<attempt index=2>\n</attempt>";
        let got = blocks(prompt, "attempt");
        assert_eq!(got, vec![("index=0", "A"), ("index=1", "B\nB2"), ("index=2", "")]);
        assert!(blocks("<attempt>\nunterminated", "attempt").is_empty());
    }

    #[test]
    fn id_arrays() {
        let (ids, span) = first_id_array("see [1, \"x\"] and [\"y\"]").unwrap();
        assert_eq!(ids, ["1", "x"]);
        assert_eq!(span, 4..12);
        assert_eq!(first_id_array("[{\"a\":1}] then [\"z\"]").unwrap().0, ["z"]);
        assert!(first_id_array("nothing [here").is_none());
    }
}
