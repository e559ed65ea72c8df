use std::sync::Arc;

use nextpoi_core::agents::{
    AgentBackends, FixtureWiki, LlmHandle, Orchestrator, ReflectorSettings, SearchTool, TemplateSet,
    WebSearchStub, WikipediaTool,
};
use nextpoi_core::geo::{AmapClient, AmapConfig, MappingClient, OfflineMapping};
use nextpoi_core::llm::{Gateway, LlmBackend, MockBackend, OpenAiCompatible, OpenAiConfig, ResponseCache};

use crate::config::{MappingKind, RunConfig, SearchKind};
use crate::CliError;

/// Ids served by the deterministic heuristic mock.
pub const MOCK_BACKENDS: [&str; 2] = ["mock-heuristic", "mock"];

/// Gateway, templates, tools and mapping client for `config`.
pub fn orchestrator(config: &RunConfig) -> Result<Orchestrator, CliError> {
    let cache = match &config.cache_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
            ResponseCache::open(dir).map_err(|e| CliError::Runtime(e.to_string()))?
        }
        None => ResponseCache::in_memory(),
    };
    let mut gateway = Gateway::new(Arc::new(cache), config.cache_mode);
    let (backend, model): (Arc<dyn LlmBackend>, String) = if MOCK_BACKENDS.contains(&config.backend.as_str()) {
        (Arc::new(MockBackend::heuristic()), "heuristic".into())
    } else {
        let cfg = OpenAiConfig::from_env(&config.backend).ok_or_else(|| {
            let p = OpenAiConfig::env_prefix(&config.backend);
            CliError::Usage(format!(
                "unknown backend `{}`: use mock-heuristic or set {p}_BASE_URL and {p}_MODEL",
                config.backend
            ))
        })?;
        let model = cfg.model.clone();
        (Arc::new(OpenAiCompatible::new(cfg)), model)
    };
    gateway.register(config.backend.clone(), backend, config.parallelism);
    let handle = LlmHandle::new(Arc::new(gateway), config.backend.clone()).with_model(model);

    let templates = match &config.template_dir {
        Some(dir) => TemplateSet::load_dir(dir).map_err(|e| CliError::Usage(format!("templates: {e}")))?,
        None => TemplateSet::bundled(),
    };
    let mut o = Orchestrator::new(Arc::new(templates), AgentBackends::shared(handle));
    o.reflector = ReflectorSettings { enabled: config.reflector, iterations: config.reflector_n };
    o.top_k = config.top_k;
    o.tools = match config.search {
        SearchKind::Fixtures => {
            vec![Arc::new(FixtureWiki::bundled()) as Arc<dyn SearchTool>, Arc::new(WebSearchStub::bundled())]
        }
        SearchKind::Wikipedia => vec![Arc::new(WikipediaTool::new())],
    };
    o.mapping = Some(match config.mapping {
        MappingKind::Offline => Arc::new(OfflineMapping::bundled()) as Arc<dyn MappingClient>,
        MappingKind::Amap => {
            let cfg = AmapConfig::from_env().ok_or_else(|| CliError::Usage("--mapping amap needs AMAP_API_KEY".into()))?;
            Arc::new(AmapClient::new(cfg))
        }
    });
    Ok(o)
}
