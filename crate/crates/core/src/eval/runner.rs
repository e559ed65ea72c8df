use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cold_start_groups_sized, ColdStartGrouping, GroupingError, MetricError, MetricSet, UserGroup};
use crate::agents::{AgentId, Orchestrator, ReflectionTranscript, TaskContext, TaskInput, TaskKind, TaskOutcome};
use crate::domain::{Dataset, EvalInstance, PoiId, Split, TrajectoryId, UserId};
use crate::ingest::{build_eval_instances, IngestError, InstanceConfig, SkipReport};
use crate::store::dataset_digest;

/// Failure share above which a report is flagged degraded.
pub const DEGRADED_FAILURE_SHARE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n_runs: usize,
    pub split: Split,
    pub instances: InstanceConfig,
    /// Report every reflection state `y_0 … y_N`.
    pub ablate: bool,
    /// Users per extreme cold-start group; `None` skips grouping.
    pub cold_start: Option<usize>,
    /// Instances evaluated concurrently.
    pub parallelism: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_runs: 5,
            split: Split::Test,
            instances: InstanceConfig::default(),
            ablate: false,
            cold_start: None,
            parallelism: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("the {0} split has no evaluable instances")]
    NoInstances(Split),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Grouping(#[from] GroupingError),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Everything a report depends on besides the dataset and cache contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFingerprint {
    pub dataset_digest: String,
    pub split: Split,
    pub seed: u64,
    pub runs: usize,
    pub reflector_enabled: bool,
    pub reflector_n: usize,
    pub top_k: usize,
    pub candidate_set_size: usize,
    pub long_term_length: usize,
    pub earth_radius_m: f64,
    pub template_versions: BTreeMap<String, String>,
    /// Agent name → `backend/model@temperature`.
    pub backends: BTreeMap<String, String>,
    pub cold_start_group_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub users: usize,
    pub instances: usize,
    /// Absent when the group has no evaluable instance.
    pub metrics: Option<MetricSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run: usize,
    pub failures: usize,
    #[serde(flatten)]
    pub overall: MetricSet,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub per_state: BTreeMap<String, MetricSet>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub per_group: BTreeMap<UserGroup, Option<MetricSet>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean over runs.
    #[serde(flatten)]
    pub overall: MetricSet,
    pub n_instances: usize,
    pub n_skipped: usize,
    pub skipped: SkipReport,
    /// Failed instance evaluations summed over runs.
    pub n_failed: usize,
    pub degraded: bool,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub per_group: BTreeMap<UserGroup, GroupReport>,
    /// `y_0 … y_N`, means over runs.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub per_state: BTreeMap<String, MetricSet>,
    pub runs: Vec<RunMetrics>,
    pub fingerprint: ConfigFingerprint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub agent: AgentId,
    pub message: String,
}

/// One instance evaluation in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub run: usize,
    pub instance: TrajectoryId,
    pub user_id: UserId,
    pub target: PoiId,
    pub rank: Option<usize>,
    /// Target rank under `y_0 … y_N`; only in ablation mode.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub state_ranks: Vec<Option<usize>>,
    pub transcript: Option<ReflectionTranscript>,
    pub failure: Option<FailureRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub report: MetricsReport,
    pub grouping: Option<ColdStartGrouping>,
    pub transcripts: Vec<TranscriptRecord>,
}

pub fn state_label(j: usize) -> String {
    format!("y_{j}")
}

fn fingerprint(dataset: &Dataset, config: &ExperimentConfig, o: &Orchestrator) -> ConfigFingerprint {
    let describe = |h: &crate::agents::LlmHandle| {
        format!("{}/{}@{}", h.backend_id, h.model_name, h.temperature)
    };
    let backends = [
        ("analyst", describe(&o.backends.analyst)),
        ("reflector", describe(&o.backends.reflector)),
        ("searcher", describe(&o.backends.searcher)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v))
    .collect();
    ConfigFingerprint {
        dataset_digest: dataset_digest(dataset),
        split: config.split,
        seed: config.seed,
        runs: config.n_runs,
        reflector_enabled: o.reflector.enabled,
        reflector_n: if o.reflector.enabled { o.reflector.iterations } else { 0 },
        top_k: o.top_k,
        candidate_set_size: config.instances.candidate_set_size,
        long_term_length: config.instances.long_term_length,
        earth_radius_m: config.instances.earth.radius_m,
        template_versions: o.templates.versions(),
        backends,
        cold_start_group_size: config.cold_start,
    }
}

fn evaluate(run: usize, instance: &EvalInstance, o: &Orchestrator, states: Option<usize>) -> TranscriptRecord {
    let ctx = TaskContext::from_instance(instance);
    let mut rec = TranscriptRecord {
        run,
        instance: instance.id.clone(),
        user_id: instance.user_id.clone(),
        target: instance.target_poi_id.clone(),
        rank: None,
        state_ranks: Vec::new(),
        transcript: None,
        failure: None,
    };
    match o.run_session_step(TaskKind::Re, TaskInput::Recommend(ctx)) {
        Ok(TaskOutcome::Recommendation(out)) => {
            rec.rank = out.recommendation.rank_of(&instance.target_poi_id);
            if let Some(n) = states {
                rec.state_ranks =
                    (0..=n).map(|j| out.transcript.state(j).rank_of(&instance.target_poi_id)).collect();
            }
            rec.transcript = Some(out.transcript);
        }
        Ok(_) => unreachable!("RE steps yield recommendations"),
        Err(e) => {
            tracing::warn!(instance = %instance.id, "{e}");
            if let Some(n) = states {
                rec.state_ranks = vec![None; n + 1];
            }
            rec.failure = Some(FailureRecord { agent: e.agent, message: e.error.to_string() });
            rec.transcript = e.transcript.map(|t| *t);
        }
    }
    rec
}

/// Evaluates every instance of the configured split `n_runs` times through
/// the RE pipeline and aggregates metrics overall, per reflection state and
/// per cold-start group. Output order and values do not depend on
/// scheduling.
pub fn run_experiment(
    dataset: &Dataset,
    config: &ExperimentConfig,
    orchestrator: &Orchestrator,
) -> Result<ExperimentOutput, EvalError> {
    if config.n_runs == 0 {
        return Err(EvalError::Config("runs must be at least 1".into()));
    }
    if config.parallelism == 0 {
        return Err(EvalError::Config("parallelism must be at least 1".into()));
    }
    let set = build_eval_instances(dataset, config.split, &config.instances)?;
    if set.instances.is_empty() {
        return Err(EvalError::NoInstances(config.split));
    }
    let grouping = config
        .cold_start
        .map(|size| cold_start_groups_sized(&dataset.train_trajectory_counts(), size))
        .transpose()?;
    let states = config
        .ablate
        .then_some(if orchestrator.reflector.enabled { orchestrator.reflector.iterations } else { 0 });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))?;

    let mut transcripts = Vec::with_capacity(set.instances.len() * config.n_runs);
    let mut runs = Vec::with_capacity(config.n_runs);
    for run in 0..config.n_runs {
        let records: Vec<TranscriptRecord> = pool.install(|| {
            set.instances.par_iter().map(|i| evaluate(run, i, orchestrator, states)).collect()
        });
        runs.push(run_metrics(run, &records, states, grouping.as_ref())?);
        transcripts.extend(records);
    }

    let means = |f: &dyn Fn(&RunMetrics) -> Option<MetricSet>| -> Option<MetricSet> {
        let sets: Option<Vec<MetricSet>> = runs.iter().map(f).collect();
        sets.and_then(|s| MetricSet::mean(&s))
    };
    let overall = means(&|r| Some(r.overall)).expect("at least one run");
    let per_state = match states {
        Some(n) => (0..=n)
            .map(|j| {
                let label = state_label(j);
                let m = means(&|r| r.per_state.get(&label).copied()).expect("state present in every run");
                (label, m)
            })
            .collect(),
        None => BTreeMap::new(),
    };
    let per_group = match &grouping {
        Some(g) => UserGroup::ALL
            .iter()
            .map(|&group| {
                let members = g.members(group);
                let instances = set.instances.iter().filter(|i| members.contains(&i.user_id)).count();
                let metrics = means(&|r| r.per_group.get(&group).copied().flatten());
                (group, GroupReport { users: members.len(), instances, metrics })
            })
            .collect(),
        None => BTreeMap::new(),
    };
    let n_failed: usize = runs.iter().map(|r| r.failures).sum();
    let evaluations = set.instances.len() * config.n_runs;
    let report = MetricsReport {
        overall,
        n_instances: set.instances.len(),
        n_skipped: set.skipped.total(),
        skipped: set.skipped,
        n_failed,
        degraded: n_failed as f64 > DEGRADED_FAILURE_SHARE * evaluations as f64,
        per_group,
        per_state,
        runs,
        fingerprint: fingerprint(dataset, config, orchestrator),
    };
    Ok(ExperimentOutput { report, grouping, transcripts })
}

fn run_metrics(
    run: usize,
    records: &[TranscriptRecord],
    states: Option<usize>,
    grouping: Option<&ColdStartGrouping>,
) -> Result<RunMetrics, EvalError> {
    let ranks: Vec<Option<usize>> = records.iter().map(|r| r.rank).collect();
    let mut out = RunMetrics {
        run,
        failures: records.iter().filter(|r| r.failure.is_some()).count(),
        overall: MetricSet::compute(&ranks)?,
        per_state: BTreeMap::new(),
        per_group: BTreeMap::new(),
    };
    if let Some(n) = states {
        for j in 0..=n {
            let ranks: Vec<Option<usize>> = records.iter().map(|r| r.state_ranks[j]).collect();
            out.per_state.insert(state_label(j), MetricSet::compute(&ranks)?);
        }
    }
    if let Some(g) = grouping {
        for group in UserGroup::ALL {
            let members = g.members(group);
            let ranks: Vec<Option<usize>> =
                records.iter().filter(|r| members.contains(&r.user_id)).map(|r| r.rank).collect();
            out.per_group.insert(group, MetricSet::compute(&ranks).ok());
        }
    }
    Ok(out)
}

/// Writes one JSON record per line.
pub fn write_transcripts(path: &Path, records: &[TranscriptRecord]) -> Result<(), EvalError> {
    let io = |e: std::io::Error| EvalError::Io { path: path.display().to_string(), message: e.to_string() };
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    for r in records {
        serde_json::to_writer(&mut w, r).expect("serializable record");
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_transcripts(path: &Path) -> Result<Vec<TranscriptRecord>, EvalError> {
    let err = |message: String| EvalError::Io { path: path.display().to_string(), message };
    let file = fs::File::open(path).map_err(|e| err(e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentBackends, LlmHandle, TemplateSet};
    use crate::domain::fixtures::{checkin, poi};
    use crate::domain::{CheckIn, Trajectory};
    use crate::llm::{BackendError, BackendReply, CompletionRequest, Gateway, LlmBackend, MockBackend, TokenCounts};
    use std::sync::Arc;

    /// Answers with a fixed list chosen by which recent POI the prompt names.
    struct ByRecent(Vec<(&'static str, &'static str)>);

    impl LlmBackend for ByRecent {
        fn complete(&self, r: &CompletionRequest) -> Result<BackendReply, BackendError> {
            for (marker, reply) in &self.0 {
                if r.prompt.contains(marker) {
                    return Ok(BackendReply { text: (*reply).into(), token_counts: TokenCounts::default() });
                }
            }
            Err(BackendError::Malformed("no scripted reply".into()))
        }
    }

    fn orchestrator(backend: Arc<dyn LlmBackend>, reflector: bool) -> Orchestrator {
        let mut g = Gateway::default();
        g.register("b", backend, 4);
        let mut o = Orchestrator::new(
            Arc::new(TemplateSet::bundled()),
            AgentBackends::shared(LlmHandle::new(Arc::new(g), "b")),
        );
        o.reflector.enabled = reflector;
        o
    }

    /// Three users, each with one train and one test trajectory; the test
    /// trajectory ends at `t{n}` after visiting `r{n}`.
    fn dataset() -> Dataset {
        let mut ds = Dataset::default();
        for i in 0..12 {
            let p = poi(&format!("p{i}"), "Cafe", 40.70 + i as f64 * 0.001, -74.0);
            ds.pois.insert(p.id.clone(), p);
        }
        for u in 1..=3 {
            let user = format!("u{u}");
            let mk = |ord, cs: Vec<CheckIn>| Trajectory { id: TrajectoryId::new(user.as_str().into(), ord), checkins: cs };
            let train = mk(0, vec![checkin(&user, "p0", 0), checkin(&user, "p1", 1)]);
            let test = mk(1, vec![checkin(&user, &format!("p{}", u + 3), 48), checkin(&user, &format!("p{u}"), 49)]);
            ds.splits.insert(train.id.clone(), Split::Train);
            ds.splits.insert(test.id.clone(), Split::Test);
            ds.users.insert(user.as_str().into(), vec![train, test]);
        }
        ds
    }

    fn worked_backend() -> Arc<dyn LlmBackend> {
        // targets are p1, p2, p3; recent POIs p4, p5, p6
        Arc::new(ByRecent(vec![
            ("p4 | Cafe | ", "[\"p1\", \"p0\"]"),
            ("p5 | Cafe | ", "[\"p0\", \"p4\", \"p2\"]"),
            ("p6 | Cafe | ", "[\"p0\"]"),
        ]))
    }

    #[test]
    fn worked_ranks_flow_into_the_report() {
        let o = orchestrator(worked_backend(), false);
        let cfg = ExperimentConfig { n_runs: 1, ..Default::default() };
        let out = run_experiment(&dataset(), &cfg, &o).unwrap();
        let r = &out.report;
        assert_eq!(r.n_instances, 3);
        assert_eq!(r.overall.acc_at_1, 1.0 / 3.0);
        assert_eq!(r.overall.acc_at_5, 2.0 / 3.0);
        assert_eq!(r.overall.acc_at_10, 2.0 / 3.0);
        assert!((r.overall.mrr - (1.0 + 1.0 / 3.0) / 3.0).abs() < 1e-12);
        let ranks: Vec<_> = out.transcripts.iter().map(|t| t.rank).collect();
        assert_eq!(ranks, [Some(1), Some(3), None]);
        assert!(!r.degraded);
    }

    #[test]
    fn failures_count_as_misses_and_degrade() {
        let backend = Arc::new(ByRecent(vec![("p4 | Cafe | ", "[\"p1\"]")]));
        let o = orchestrator(backend, false);
        let cfg = ExperimentConfig { n_runs: 2, ablate: true, ..Default::default() };
        let r = run_experiment(&dataset(), &cfg, &o).unwrap().report;
        assert_eq!(r.n_failed, 4);
        assert!(r.degraded);
        assert_eq!(r.overall.acc_at_1, 1.0 / 3.0);
        assert_eq!(r.per_state.keys().collect::<Vec<_>>(), ["y_0"]);
    }

    #[test]
    fn ablation_reports_every_state_and_runs_repeat() {
        let o = orchestrator(Arc::new(MockBackend::heuristic()), true);
        let cfg = ExperimentConfig { n_runs: 2, ablate: true, ..Default::default() };
        let a = run_experiment(&dataset(), &cfg, &o).unwrap();
        assert_eq!(a.report.per_state.keys().collect::<Vec<_>>(), ["y_0", "y_1", "y_2", "y_3"]);
        assert_eq!(a.report.runs[0], RunMetrics { run: 0, ..a.report.runs[1].clone() });
        assert_eq!(a.report.per_state["y_3"], a.report.overall);

        let off = orchestrator(Arc::new(MockBackend::heuristic()), false);
        let b = run_experiment(&dataset(), &ExperimentConfig { n_runs: 2, ..Default::default() }, &off).unwrap();
        assert_eq!(a.report.per_state["y_0"], b.report.overall);
    }

    #[test]
    fn transcripts_round_trip() {
        let o = orchestrator(Arc::new(MockBackend::heuristic()), true);
        let out = run_experiment(&dataset(), &ExperimentConfig { n_runs: 1, ..Default::default() }, &o).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("t.jsonl");
        write_transcripts(&p, &out.transcripts).unwrap();
        assert_eq!(read_transcripts(&p).unwrap(), out.transcripts);
    }

    #[test]
    fn config_errors() {
        let o = orchestrator(Arc::new(MockBackend::heuristic()), false);
        let ds = dataset();
        assert!(matches!(
            run_experiment(&ds, &ExperimentConfig { n_runs: 0, ..Default::default() }, &o),
            Err(EvalError::Config(_))
        ));
        assert!(matches!(
            run_experiment(&ds, &ExperimentConfig { cold_start: Some(30), ..Default::default() }, &o),
            Err(EvalError::Grouping(_))
        ));
        assert!(matches!(
            run_experiment(&ds, &ExperimentConfig { split: Split::Validation, ..Default::default() }, &o),
            Err(EvalError::NoInstances(Split::Validation))
        ));
    }

    #[test]
    fn small_groups_when_configured() {
        let o = orchestrator(Arc::new(MockBackend::heuristic()), false);
        let cfg = ExperimentConfig { n_runs: 1, cold_start: Some(1), ..Default::default() };
        let r = run_experiment(&dataset(), &cfg, &o).unwrap().report;
        let sizes: Vec<_> = r.per_group.values().map(|g| (g.users, g.instances)).collect();
        assert_eq!(sizes, [(1, 1), (1, 1), (1, 1)]);
    }
}
