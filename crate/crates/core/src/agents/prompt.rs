use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TemplateName {
    /// Task context assembled by the Manager.
    #[serde(rename = "p_m")]
    PM,
    /// Reflection.
    #[serde(rename = "p_th")]
    PTh,
    /// Refinement.
    #[serde(rename = "p_re")]
    PRe,
    /// Analyst ranking.
    #[serde(rename = "p_an")]
    PAn,
    /// Searcher summary.
    #[serde(rename = "p_se")]
    PSe,
}

impl TemplateName {
    pub const ALL: [TemplateName; 5] =
        [TemplateName::PM, TemplateName::PTh, TemplateName::PRe, TemplateName::PAn, TemplateName::PSe];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::PM => "p_m",
            TemplateName::PTh => "p_th",
            TemplateName::PRe => "p_re",
            TemplateName::PAn => "p_an",
            TemplateName::PSe => "p_se",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.txt", self.as_str())
    }

    /// Placeholders the agents bind when rendering this template.
    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            TemplateName::PM => &["preferences", "history", "candidates"],
            TemplateName::PTh => &["context", "attempt", "top_k"],
            TemplateName::PRe => &["context", "trials", "top_k"],
            TemplateName::PAn => &["context", "top_k"],
            TemplateName::PSe => &["query", "tools", "snippets"],
        }
    }

    fn bundled(self) -> &'static str {
        match self {
            TemplateName::PM => include_str!("../../templates/p_m.txt"),
            TemplateName::PTh => include_str!("../../templates/p_th.txt"),
            TemplateName::PRe => include_str!("../../templates/p_re.txt"),
            TemplateName::PAn => include_str!("../../templates/p_an.txt"),
            TemplateName::PSe => include_str!("../../templates/p_se.txt"),
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("reading template {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("template {0} has no `# version:` header line")]
    MissingVersion(TemplateName),
    #[error("template {template} does not use placeholder {{{placeholder}}}")]
    MissingPlaceholder { template: TemplateName, placeholder: String },
    #[error("template {template} needs a binding for {{{placeholder}}}")]
    MissingBinding { template: TemplateName, placeholder: String },
    #[error("template {template} has no placeholder {{{name}}} to bind")]
    UnusedBinding { template: TemplateName, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub body: String,
    pub version: String,
}

fn placeholder_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| Regex::new(r"\{([a-z_][a-z0-9_]*)\}").expect("static regex"))
}

impl PromptTemplate {
    /// Leading `#` lines form the header and are not part of the body; one of
    /// them must read `# version: <string>`.
    pub fn parse(name: TemplateName, text: &str) -> Result<Self, TemplateError> {
        let mut version = None;
        let mut lines = text.lines().peekable();
        while let Some(line) = lines.next_if(|l| l.starts_with('#')) {
            if let Some(v) = line.trim_start_matches('#').trim().strip_prefix("version:") {
                version = Some(v.trim().to_owned());
            }
        }
        let body = lines.collect::<Vec<_>>().join("\n");
        let version = version.filter(|v| !v.is_empty()).ok_or(TemplateError::MissingVersion(name))?;
        Ok(Self { name, body, version })
    }

    pub fn placeholders(&self) -> BTreeSet<&str> {
        placeholder_re().captures_iter(&self.body).map(|c| c.get(1).expect("group").as_str()).collect()
    }

    fn check_contract(&self) -> Result<(), TemplateError> {
        let present = self.placeholders();
        for p in self.name.placeholders() {
            if !present.contains(p) {
                return Err(TemplateError::MissingPlaceholder { template: self.name, placeholder: (*p).into() });
            }
        }
        Ok(())
    }
}

/// Single-pass `{name}` substitution; bound text is inserted verbatim.
pub fn render_prompt(template: &PromptTemplate, bindings: &[(&str, &str)]) -> Result<String, TemplateError> {
    let map: BTreeMap<&str, &str> = bindings.iter().copied().collect();
    let present = template.placeholders();
    if let Some(name) = map.keys().find(|k| !present.contains(*k)) {
        return Err(TemplateError::UnusedBinding { template: template.name, name: (*name).into() });
    }
    let mut out = String::with_capacity(template.body.len());
    let mut last = 0;
    for caps in placeholder_re().captures_iter(&template.body) {
        let whole = caps.get(0).expect("match");
        let name = &caps[1];
        let value = map.get(name).ok_or_else(|| TemplateError::MissingBinding {
            template: template.name,
            placeholder: name.to_owned(),
        })?;
        out.push_str(&template.body[last..whole.start()]);
        out.push_str(value);
        last = whole.end();
    }
    out.push_str(&template.body[last..]);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateName, PromptTemplate>,
}

impl TemplateSet {
    /// The templates compiled into the binary.
    pub fn bundled() -> Self {
        let templates = TemplateName::ALL
            .into_iter()
            .map(|n| {
                let t = PromptTemplate::parse(n, n.bundled()).expect("bundled template parses");
                t.check_contract().expect("bundled template contract");
                (n, t)
            })
            .collect();
        Self { templates }
    }

    /// Reads `p_m.txt`, `p_th.txt`, `p_re.txt`, `p_an.txt` and `p_se.txt`
    /// from `dir`. Every file must exist and use its placeholders.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut templates = BTreeMap::new();
        for n in TemplateName::ALL {
            let path = dir.join(n.file_name());
            let text = std::fs::read_to_string(&path).map_err(|source| TemplateError::Io { path, source })?;
            let t = PromptTemplate::parse(n, &text)?;
            t.check_contract()?;
            templates.insert(n, t);
        }
        Ok(Self { templates })
    }

    pub fn get(&self, name: TemplateName) -> &PromptTemplate {
        &self.templates[&name]
    }

    pub fn render(&self, name: TemplateName, bindings: &[(&str, &str)]) -> Result<String, TemplateError> {
        render_prompt(self.get(name), bindings)
    }

    /// `name → version`, stamped into reports.
    pub fn versions(&self) -> BTreeMap<String, String> {
        self.templates.iter().map(|(n, t)| (n.to_string(), t.version.clone())).collect()
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::bundled()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(body: &str) -> PromptTemplate {
        PromptTemplate { name: TemplateName::PAn, body: body.into(), version: "t".into() }
    }

    #[test]
    fn substitution() {
        assert_eq!(render_prompt(&t("A {x} B"), &[("x", "1")]).unwrap(), "A 1 B");
        assert!(matches!(
            render_prompt(&t("A {x} {y}"), &[("x", "1")]),
            Err(TemplateError::MissingBinding { placeholder, .. }) if placeholder == "y"
        ));
        assert!(matches!(
            render_prompt(&t("A {x}"), &[("x", "1"), ("z", "2")]),
            Err(TemplateError::UnusedBinding { .. })
        ));
    }

    #[test]
    fn bound_braces_are_not_expanded() {
        assert_eq!(render_prompt(&t("<{x}>"), &[("x", "{x} {y}")]).unwrap(), "<{x} {y}>");
        // JSON-looking text in the body is left alone.
        assert_eq!(render_prompt(&t(r#"{"a": 1} {x}"#), &[("x", "v")]).unwrap(), r#"{"a": 1} v"#);
    }

    #[test]
    fn header_and_version() {
        let p = PromptTemplate::parse(TemplateName::PAn, "# version: p_an/7\n# {context} is x\nbody {context}").unwrap();
        assert_eq!(p.version, "p_an/7");
        assert_eq!(p.body, "body {context}");
        assert!(matches!(
            PromptTemplate::parse(TemplateName::PAn, "body"),
            Err(TemplateError::MissingVersion(TemplateName::PAn))
        ));
    }

    #[test]
    fn bundled_set_and_directory_loading() {
        let b = TemplateSet::bundled();
        assert_eq!(b.versions().len(), 5);
        let dir = tempfile::tempdir().unwrap();
        for n in TemplateName::ALL {
            std::fs::write(dir.path().join(n.file_name()), n.bundled()).unwrap();
        }
        assert_eq!(TemplateSet::load_dir(dir.path()).unwrap(), b);
        std::fs::write(dir.path().join("p_th.txt"), "# version: x\nno placeholders").unwrap();
        assert!(matches!(TemplateSet::load_dir(dir.path()), Err(TemplateError::MissingPlaceholder { .. })));
        std::fs::remove_file(dir.path().join("p_se.txt")).unwrap();
        assert!(TemplateSet::load_dir(dir.path()).is_err());
    }
}
