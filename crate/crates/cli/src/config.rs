//! Run settings merged from flags, environment, a TOML file and defaults,
//! in that order of precedence.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use nextpoi_core::llm::CacheMode;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingKind {
    /// Bundled geocode table and great-circle routes.
    Offline,
    /// Live Amap web service (AMAP_API_KEY).
    Amap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchKind {
    /// Bundled encyclopedia and web-result fixtures.
    Fixtures,
    /// Live Wikipedia page summaries.
    Wikipedia,
}

fn cache_mode(s: &str) -> Result<CacheMode, String> {
    s.parse()
}

/// Settings shared by `evaluate`, `serve` and `session`. Unset flags fall
/// back to the environment, then the config file, then defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Dataset directory in canonical form (see `ingest`)
    #[arg(long, env = "NEXTPOI_DATASET")]
    pub dataset: Option<PathBuf>,
    /// LLM backend id: `mock-heuristic`, or an id configured through
    /// NEXTPOI_BACKEND_<ID>_BASE_URL / _MODEL / _API_KEY
    #[arg(long, env = "NEXTPOI_BACKEND")]
    pub backend: Option<String>,
    /// Reflection rounds N
    #[arg(long, env = "NEXTPOI_REFLECTOR_N")]
    pub reflector_n: Option<usize>,
    /// Disable the Reflector (report y_0 only)
    #[arg(long)]
    pub no_reflector: bool,
    /// Repetitions averaged in a report
    #[arg(long, env = "NEXTPOI_RUNS")]
    pub runs: Option<usize>,
    /// Instances evaluated concurrently, also the backend's in-flight limit
    #[arg(long, env = "NEXTPOI_PARALLELISM")]
    pub parallelism: Option<usize>,
    /// Directory with p_m.txt, p_an.txt, p_th.txt, p_re.txt, p_se.txt
    #[arg(long, env = "NEXTPOI_TEMPLATE_DIR")]
    pub template_dir: Option<PathBuf>,
    /// Response cache directory (created if missing); in-memory when unset
    #[arg(long, env = "NEXTPOI_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    /// read-write, replay or off
    #[arg(long, env = "NEXTPOI_CACHE_MODE", value_parser = cache_mode)]
    pub cache_mode: Option<CacheMode>,
    /// Recorded in reports
    #[arg(long, env = "NEXTPOI_SEED")]
    pub seed: Option<u64>,
    /// Length of each recommendation list
    #[arg(long, env = "NEXTPOI_TOP_K")]
    pub top_k: Option<usize>,
    #[arg(long, env = "NEXTPOI_MAPPING", value_enum)]
    pub mapping: Option<MappingKind>,
    #[arg(long, env = "NEXTPOI_SEARCH", value_enum)]
    pub search: Option<SearchKind>,
}

/// The TOML config file: the same keys as [`RunConfig`], all optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<PathBuf>,
    pub backend: Option<String>,
    pub reflector: Option<bool>,
    pub reflector_n: Option<usize>,
    pub runs: Option<usize>,
    pub parallelism: Option<usize>,
    pub template_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub cache_mode: Option<CacheMode>,
    pub seed: Option<u64>,
    pub top_k: Option<usize>,
    pub mapping: Option<MappingKind>,
    pub search: Option<SearchKind>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub backend: String,
    pub reflector: bool,
    pub reflector_n: usize,
    pub runs: usize,
    pub parallelism: usize,
    pub template_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub cache_mode: CacheMode,
    pub seed: u64,
    pub top_k: usize,
    pub mapping: MappingKind,
    pub search: SearchKind,
}

pub const DEFAULT_BACKEND: &str = "mock-heuristic";

impl RunConfig {
    pub fn resolve(args: &RunArgs, file: &FileConfig) -> Result<Self, CliError> {
        let default_parallelism = std::thread::available_parallelism().map_or(4, |n| n.get().min(8));
        let cfg = RunConfig {
            dataset: args.dataset.clone().or_else(|| file.dataset.clone()),
            backend: args.backend.clone().or_else(|| file.backend.clone()).unwrap_or_else(|| DEFAULT_BACKEND.into()),
            reflector: !args.no_reflector && file.reflector.unwrap_or(true),
            reflector_n: args.reflector_n.or(file.reflector_n).unwrap_or(3),
            runs: args.runs.or(file.runs).unwrap_or(5),
            parallelism: args.parallelism.or(file.parallelism).unwrap_or(default_parallelism),
            template_dir: args.template_dir.clone().or_else(|| file.template_dir.clone()),
            cache_dir: args.cache_dir.clone().or_else(|| file.cache_dir.clone()),
            cache_mode: args.cache_mode.or(file.cache_mode).unwrap_or_default(),
            seed: args.seed.or(file.seed).unwrap_or(0),
            top_k: args.top_k.or(file.top_k).unwrap_or(10),
            mapping: args.mapping.or(file.mapping).unwrap_or(MappingKind::Offline),
            search: args.search.or(file.search).unwrap_or(SearchKind::Fixtures),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.runs == 0 {
            return Err(CliError::Usage("runs must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(CliError::Usage("parallelism must be at least 1".into()));
        }
        if self.top_k == 0 {
            return Err(CliError::Usage("top-k must be at least 1".into()));
        }
        if self.backend.trim().is_empty() {
            return Err(CliError::Usage("backend id is empty".into()));
        }
        for (name, dir) in [("dataset", &self.dataset), ("template dir", &self.template_dir)] {
            if let Some(d) = dir {
                if !d.is_dir() {
                    return Err(CliError::Usage(format!("{name} {} is not a directory", d.display())));
                }
            }
        }
        Ok(())
    }

    pub fn require_dataset(&self) -> Result<&Path, CliError> {
        self.dataset.as_deref().ok_or_else(|| CliError::Usage("a dataset directory is required (--dataset)".into()))
    }

    /// Logged at startup so a run can be reproduced from its log.
    pub fn log(&self, command: &str) {
        let json = serde_json::to_string(self).expect("serializable config");
        tracing::info!(command, "effective config {json}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file: FileConfig = toml::from_str("runs = 2\nreflector_n = 1\nbackend = \"from-file\"\nreflector = false").unwrap();
        let args = RunArgs { runs: Some(7), ..Default::default() };
        let c = RunConfig::resolve(&args, &file).unwrap();
        assert_eq!((c.runs, c.reflector_n, c.backend.as_str(), c.reflector), (7, 1, "from-file", false));
        assert_eq!(c.top_k, 10);
        assert_eq!(c.cache_mode, CacheMode::ReadWrite);
    }

    #[test]
    fn invariants_are_checked() {
        let bad = RunArgs { runs: Some(0), ..Default::default() };
        assert!(matches!(RunConfig::resolve(&bad, &FileConfig::default()), Err(CliError::Usage(_))));
        let missing = RunArgs { dataset: Some("/nonexistent/nextpoi".into()), ..Default::default() };
        assert!(matches!(RunConfig::resolve(&missing, &FileConfig::default()), Err(CliError::Usage(_))));
        assert!(toml::from_str::<FileConfig>("unknown_key = 1").is_err());
    }
}
