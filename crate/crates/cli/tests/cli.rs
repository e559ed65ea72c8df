use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nextpoi"));
    for (k, _) in std::env::vars_os() {
        if k.to_string_lossy().starts_with("NEXTPOI_") {
            c.env_remove(k);
        }
    }
    c.env("NEXTPOI_LOG", "warn");
    c
}

fn mini() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/mini")
}

fn run(c: &mut Command) -> Output {
    c.output().expect("binary runs")
}

fn report(path: &std::path::Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn help_and_usage_errors() {
    let o = run(bin().arg("--help"));
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["ingest", "evaluate", "ablate", "serve", "session", "generate-fixture"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    assert_eq!(run(bin().args(["evaluate", "--bogus"])).status.code(), Some(2));
    assert_eq!(run(bin().arg("frobnicate")).status.code(), Some(2));
    let o = run(bin().args(["evaluate", "--out", "/tmp/x.json"]));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--dataset"));
    let o = run(bin().args(["evaluate", "--backend", "nowhere", "--out", "/tmp/x.json"]).arg("--dataset").arg(mini()));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("NEXTPOI_BACKEND_NOWHERE_BASE_URL"));
}

#[test]
fn ingest_reports_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin().args(["ingest", "--input", "/nonexistent/raw.tsv", "--out"]).arg(dir.path()));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/raw.tsv"));
}

#[test]
fn ingest_of_the_raw_fixture_reproduces_the_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin().arg("ingest").arg("--input").arg(mini().join("raw_checkins.tsv")).arg("--out").arg(dir.path()));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stats: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stats["users"], 20);
    for f in ["pois.jsonl", "checkins.jsonl", "splits.jsonl", "dataset.json"] {
        assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(mini().join(f)).unwrap(), "{f}");
    }
    assert!(dir.path().join("stats.json").is_file());
}

#[test]
fn evaluate_writes_report_and_transcripts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = run(bin()
        .args(["evaluate", "--backend", "mock-heuristic", "--runs", "1", "--ablate", "--cold-start", "5"])
        .arg("--dataset")
        .arg(mini())
        .arg("--out")
        .arg(&out));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    for key in ["acc@1", "acc@5", "acc@10", "mrr"] {
        let v = r[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key}");
    }
    assert_eq!(r["runs"].as_array().unwrap().len(), 1);
    assert_eq!(r["per_state"].as_object().unwrap().len(), 4);
    assert_eq!(r["per_group"].as_object().unwrap().len(), 3);
    assert_eq!(r["fingerprint"]["seed"], 0);
    let lines = std::fs::read_to_string(dir.path().join("report.transcripts.jsonl")).unwrap();
    assert_eq!(lines.lines().count() as u64, r["n_instances"].as_u64().unwrap());
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("Acc@1") && table.contains("y_3"));
}

#[test]
fn flags_beat_environment_beat_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("nextpoi.toml");
    std::fs::write(&cfg, format!("dataset = {:?}\nruns = 3\nreflector_n = 2\nseed = 9\n", mini().to_str().unwrap())).unwrap();
    let out = dir.path().join("r.json");
    let o = run(bin()
        .env("NEXTPOI_RUNS", "2")
        .env("NEXTPOI_SEED", "5")
        .arg("--config")
        .arg(&cfg)
        .args(["evaluate", "--seed", "4", "--parallelism", "2", "--out"])
        .arg(&out));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let f = &report(&out)["fingerprint"];
    assert_eq!(f["runs"], 2);
    assert_eq!(f["seed"], 4);
    assert_eq!(f["reflector_n"], 2);

    std::fs::write(&cfg, "runs = 3\nnot_a_key = 1\n").unwrap();
    let o = run(bin().arg("--config").arg(&cfg).args(["evaluate", "--out"]).arg(&out));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn generate_fixture_matches_the_shipped_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin().args(["generate-fixture", "--out"]).arg(dir.path()));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["raw_checkins.tsv", "manifest.json", "checkins.jsonl"] {
        assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(mini().join(f)).unwrap(), "{f}");
    }
    assert_eq!(run(bin().args(["generate-fixture", "--users", "0", "--out"]).arg(dir.path())).status.code(), Some(2));
}

#[test]
fn session_repl_on_stdin() {
    let mut child = bin()
        .args(["session", "--user", "1"])
        .arg("--dataset")
        .arg(mini())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"help\nrecommend\nask Central Park\nconfirm nope\nnavigate\nquit\n")
        .unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("recommendations ("), "{text}");
    assert!(text.contains("843 acres"), "{text}");
    assert_eq!(text.matches("error:").count(), 2, "{text}");
}
