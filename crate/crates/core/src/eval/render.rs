use std::fmt::Write;

use super::{MetricSet, MetricsReport};

const HEADER: [&str; 4] = ["Acc@1", "Acc@5", "Acc@10", "MRR"];

fn table(out: &mut String, title: &str, first_col: &str, rows: &[(String, Option<MetricSet>, String)]) {
    let width = rows.iter().map(|r| r.0.len()).chain([first_col.len()]).max().unwrap_or(0);
    let _ = writeln!(out, "{title}");
    let _ = write!(out, "{first_col:<width$}");
    for h in HEADER {
        let _ = write!(out, "  {h:>7}");
    }
    let _ = writeln!(out);
    for (label, metrics, note) in rows {
        let _ = write!(out, "{label:<width$}");
        match metrics {
            Some(m) => {
                for v in m.values() {
                    let _ = write!(out, "  {v:>7.4}");
                }
            }
            None => {
                for _ in HEADER {
                    let _ = write!(out, "  {:>7}", "-");
                }
            }
        }
        if !note.is_empty() {
            let _ = write!(out, "  {note}");
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(out);
}

/// Plain-text tables: overall, per cold-start group and per reflection
/// state, each present only when the report carries it.
pub fn render_report(report: &MetricsReport) -> String {
    let fp = &report.fingerprint;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} split: {} instances ({} skipped), {} run(s), reflector {}{}",
        fp.split,
        report.n_instances,
        report.n_skipped,
        fp.runs,
        if fp.reflector_enabled { format!("N={}", fp.reflector_n) } else { "off".into() },
        if report.degraded { format!(", DEGRADED: {} failed evaluations", report.n_failed) } else { String::new() },
    );
    let _ = writeln!(out, "dataset {}", &fp.dataset_digest[..fp.dataset_digest.len().min(16)]);
    let _ = writeln!(out);

    let label = fp.backends.get("analyst").cloned().unwrap_or_default();
    let mut rows = vec![(label, Some(report.overall), String::new())];
    if report.runs.len() > 1 {
        for r in &report.runs {
            rows.push((format!("  run {}", r.run), Some(r.overall), String::new()));
        }
    }
    table(&mut out, "Overall", "model", &rows);

    if !report.per_group.is_empty() {
        let rows: Vec<_> = report
            .per_group
            .iter()
            .map(|(g, r)| (g.to_string(), r.metrics, format!("{} users, {} instances", r.users, r.instances)))
            .collect();
        table(&mut out, "Cold-start groups", "group", &rows);
    }
    if !report.per_state.is_empty() {
        let rows: Vec<_> =
            report.per_state.iter().map(|(s, m)| (s.clone(), Some(*m), String::new())).collect();
        table(&mut out, "Reflection states", "state", &rows);
    }
    out
}
