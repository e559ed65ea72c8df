#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use chrono::{TimeZone, Utc};
use nextpoi_core::agents::{AgentBackends, FixtureWiki, LlmHandle, Orchestrator, TemplateSet};
use nextpoi_core::geo::OfflineMapping;
use nextpoi_core::llm::{
    BackendError, BackendReply, CacheMode, CompletionRequest, Gateway, LlmBackend, MockBackend, ResponseCache,
};
use nextpoi_core::store::read_dataset;
use nextpoi_service::{SessionService, Store};

pub fn mini_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/mini")
}

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/api")
}

/// The heuristic mock with a delay, to make overlapping requests observable.
pub struct Slow(pub MockBackend, pub Duration);

impl LlmBackend for Slow {
    fn complete(&self, r: &CompletionRequest) -> Result<BackendReply, BackendError> {
        std::thread::sleep(self.1);
        self.0.complete(r)
    }
}

pub fn orchestrator(backend: Arc<dyn LlmBackend>, cache: Arc<ResponseCache>) -> Orchestrator {
    let mut g = Gateway::new(cache, CacheMode::ReadWrite);
    g.register("mock-heuristic", backend, 4);
    let mut o = Orchestrator::new(
        Arc::new(TemplateSet::bundled()),
        AgentBackends::shared(LlmHandle::new(Arc::new(g), "mock-heuristic")),
    );
    o.tools = vec![Arc::new(FixtureWiki::bundled())];
    o.mapping = Some(Arc::new(OfflineMapping::bundled()));
    o
}

pub fn service_with(backend: Arc<dyn LlmBackend>, cache: Arc<ResponseCache>) -> SessionService {
    let dataset = read_dataset(&mini_dir()).expect("bundled mini fixture");
    let t0 = Utc.with_ymd_and_hms(2026, 1, 1, 12, 0, 0).single().unwrap();
    SessionService::new(Store::in_memory().unwrap(), orchestrator(backend, cache), Some(Arc::new(dataset)))
        .with_clock(Arc::new(move || t0))
}

pub fn service() -> SessionService {
    service_with(Arc::new(MockBackend::heuristic()), Arc::new(ResponseCache::in_memory()))
}
