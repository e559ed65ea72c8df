mod config;
mod repl;
mod runtime;

use std::fs;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nextpoi_core::domain::Split;
use nextpoi_core::eval::{render_report, run_experiment, write_transcripts, ExperimentConfig, COLD_START_GROUP_SIZE};
use nextpoi_core::ingest::{ingest, FieldOrder, IngestConfig, SplitRatios};
use nextpoi_core::store::{read_dataset, write_dataset, write_json};
use nextpoi_core::synthetic::{write_fixture, SyntheticConfig};
use nextpoi_service::{router, serve, CreateSessionRequest, ServerOptions, SessionService, Store};
use serde::Serialize;

use config::{FileConfig, RunArgs, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "nextpoi", version, about = "Multi-agent next-POI recommendation")]
struct Cli {
    /// TOML file with run settings (flags and environment take precedence)
    #[arg(long, global = true, env = "NEXTPOI_CONFIG")]
    config: Option<PathBuf>,
    /// error, warn, info, debug or trace
    #[arg(long, global = true, env = "NEXTPOI_LOG", default_value = "info")]
    log_level: tracing::Level,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse, filter, segment and split a raw check-in export
    Ingest(IngestArgs),
    /// Run the offline evaluation and write a metrics report
    Evaluate(EvaluateArgs),
    /// `evaluate --ablate`: report every reflection state y_0..y_N
    Ablate(EvaluateArgs),
    /// Serve the /v1 session API
    Serve(ServeArgs),
    /// Interactive text session on standard input
    Session(SessionArgs),
    /// Write a synthetic export, its manifest and the ingested dataset
    GenerateFixture(GenerateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InputFormat {
    /// Tab-separated Foursquare (TSMC2014) layout
    Foursquare,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "foursquare")]
    format: InputFormat,
    /// Minimum check-ins per user and per POI
    #[arg(long, default_value_t = 10)]
    min_support: usize,
    /// Trajectory window
    #[arg(long, default_value_t = 24)]
    window_hours: i64,
    /// train:validation:test ratios
    #[arg(long, default_value = "8:1:1", value_parser = |s: &str| s.parse::<SplitRatios>().map_err(|e| e.to_string()))]
    split: SplitRatios,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Report every reflection state y_0..y_N
    #[arg(long)]
    ablate: bool,
    /// Report inactive / normal / very_active groups of this many users
    #[arg(long, num_args = 0..=1, default_missing_value = "30")]
    cold_start: Option<usize>,
    /// Split to evaluate
    #[arg(long, default_value = "test", value_parser = |s: &str| s.parse::<Split>())]
    split: Split,
    /// Report file (JSON)
    #[arg(long)]
    out: PathBuf,
    /// Transcript file (JSON lines); defaults to <out>.transcripts.jsonl
    #[arg(long)]
    transcripts: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, env = "NEXTPOI_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Session database file; sessions are kept in memory when unset
    #[arg(long, env = "NEXTPOI_STORE")]
    store: Option<PathBuf>,
    /// Static files served outside /v1 (the browser client build)
    #[arg(long, env = "NEXTPOI_STATIC_DIR")]
    static_dir: Option<PathBuf>,
    /// Require `Authorization: Bearer <token>` on /v1
    #[arg(long, env = "NEXTPOI_API_TOKEN", hide_env_values = true)]
    api_token: Option<String>,
}

#[derive(Debug, Args)]
struct SessionArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Dataset user whose history primes the session
    #[arg(long)]
    user: Option<String>,
    /// Free-text preferences for the Analyst
    #[arg(long)]
    preferences: Option<String>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    users: usize,
    #[arg(long, default_value_t = 50)]
    pois: usize,
    #[arg(long, default_value_t = 10)]
    categories: usize,
}

fn file_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    path.map(FileConfig::load).transpose().map(Option::unwrap_or_default)
}

#[derive(Serialize)]
struct IngestManifest<'a> {
    input: &'a Path,
    config: &'a IngestConfig,
    stats: nextpoi_core::ingest::DatasetStats,
    parse: &'a nextpoi_core::ingest::ParseSummary,
}

fn cmd_ingest(a: IngestArgs) -> Result<(), CliError> {
    if a.window_hours <= 0 {
        return Err(CliError::Usage("--window-hours must be positive".into()));
    }
    let config = IngestConfig {
        min_support: a.min_support,
        window_seconds: a.window_hours * 3600,
        split: a.split,
        seed: a.seed,
        ..Default::default()
    };
    tracing::info!(input = %a.input.display(), "effective config {}", serde_json::to_string(&config).expect("serializable"));
    let file = fs::File::open(&a.input).map_err(|e| CliError::Runtime(format!("{}: {e}", a.input.display())))?;
    let order = match a.format {
        InputFormat::Foursquare => FieldOrder::FOURSQUARE,
    };
    let out = ingest(BufReader::new(file), &order, &config).map_err(runtime)?;
    write_dataset(&out.dataset, &a.out).map_err(runtime)?;
    let manifest = IngestManifest { input: &a.input, config: &config, stats: out.stats, parse: &out.parse };
    write_json(&a.out.join("stats.json"), &manifest).map_err(runtime)?;
    println!("{}", serde_json::to_string_pretty(&out.stats).expect("serializable"));
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs, file: &FileConfig, force_ablate: bool, command: &str) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&a.run, file)?;
    cfg.log(command);
    let dataset = read_dataset(cfg.require_dataset()?).map_err(runtime)?;
    let orchestrator = runtime::orchestrator(&cfg)?;
    let experiment = ExperimentConfig {
        n_runs: cfg.runs,
        split: a.split,
        ablate: a.ablate || force_ablate,
        cold_start: a.cold_start,
        parallelism: cfg.parallelism,
        seed: cfg.seed,
        ..Default::default()
    };
    if experiment.cold_start == Some(0) {
        return Err(CliError::Usage(format!("--cold-start needs a positive group size (default {COLD_START_GROUP_SIZE})")));
    }
    let out = run_experiment(&dataset, &experiment, &orchestrator).map_err(runtime)?;
    write_json(&a.out, &out.report).map_err(runtime)?;
    let transcripts = a.transcripts.unwrap_or_else(|| {
        let mut name = a.out.file_stem().unwrap_or_default().to_os_string();
        name.push(".transcripts.jsonl");
        a.out.with_file_name(name)
    });
    write_transcripts(&transcripts, &out.transcripts).map_err(runtime)?;
    tracing::info!(report = %a.out.display(), transcripts = %transcripts.display(), "written");
    if out.report.degraded {
        tracing::warn!(failed = out.report.n_failed, "report is degraded");
    }
    print!("{}", render_report(&out.report));
    Ok(())
}

fn service(cfg: &RunConfig, store: Store) -> Result<SessionService, CliError> {
    let dataset = match &cfg.dataset {
        Some(d) => Some(Arc::new(read_dataset(d).map_err(runtime)?)),
        None => None,
    };
    Ok(SessionService::new(store, runtime::orchestrator(cfg)?, dataset))
}

fn cmd_serve(a: ServeArgs, file: &FileConfig) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&a.run, file)?;
    cfg.log("serve");
    let store = match &a.store {
        Some(p) => Store::open(p).map_err(runtime)?,
        None => Store::in_memory().map_err(runtime)?,
    };
    let svc = Arc::new(service(&cfg, store)?);
    let options = ServerOptions { api_token: a.api_token, static_dir: a.static_dir };
    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    rt.block_on(serve(a.listen, router(svc, &options))).map_err(runtime)
}

fn cmd_session(a: SessionArgs, file: &FileConfig) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&a.run, file)?;
    cfg.log("session");
    let svc = service(&cfg, Store::in_memory().map_err(runtime)?)?;
    let session = svc
        .create_session(CreateSessionRequest {
            linked_user_id: a.user.map(Into::into),
            preferences: a.preferences,
            ..Default::default()
        })
        .map_err(runtime)?;
    let stdin = std::io::stdin();
    repl::run(&svc, &session.session_id, stdin.lock(), std::io::stdout().lock()).map_err(runtime)
}

fn cmd_generate(a: GenerateArgs) -> Result<(), CliError> {
    let config = SyntheticConfig { seed: a.seed, users: a.users, pois: a.pois, categories: a.categories, ..Default::default() };
    tracing::info!("effective config {}", serde_json::to_string(&config).expect("serializable"));
    let (manifest, _) = write_fixture(&a.out, &config).map_err(|e| match e {
        nextpoi_core::synthetic::SyntheticError::Config(m) => CliError::Usage(m),
        other => runtime(other),
    })?;
    println!("{}", serde_json::to_string_pretty(&manifest.stats).expect("serializable"));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_max_level(cli.log_level).with_target(false).init();

    let result = file_config(cli.config.as_deref()).and_then(|file| match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Evaluate(a) => cmd_evaluate(a, &file, false, "evaluate"),
        Command::Ablate(a) => cmd_evaluate(a, &file, true, "ablate"),
        Command::Serve(a) => cmd_serve(a, &file),
        Command::Session(a) => cmd_session(a, &file),
        Command::GenerateFixture(a) => cmd_generate(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => 2,
                CliError::Runtime(_) => 1,
            })
        }
    }
}
