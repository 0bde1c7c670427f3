//! Result files and the printed ranking table.

use std::fs;
use std::path::Path;

use serde::Serialize;

use leon_core::optimizer::{MethodSummary, RunResult};

pub const RESULTS_FILE: &str = "results.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SHIFT_FILE: &str = "shift_summary.csv";

/// One tidy row per (run, step); runs without traces get a single row.
#[derive(Debug, Serialize)]
struct TidyRow<'a> {
    task: &'a str,
    method: &'a str,
    w: Option<f64>,
    patient: &'a str,
    seed: u64,
    oracle_score: f64,
    step: Option<usize>,
    lambda: Option<f64>,
    mu: Option<f64>,
    w1: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ShiftRow<'a> {
    w: f64,
    method: &'a str,
    n: usize,
    mean: f64,
    sem: f64,
    rank: usize,
    avg_rank: f64,
}

pub fn write_results(dir: &Path, results: &[RunResult]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(results)?;
    text.push('\n');
    fs::write(dir.join(RESULTS_FILE), text)
}

/// `runs` pairs each result with its mixture weight, if any.
pub fn write_summary_csv(dir: &Path, runs: &[(Option<f64>, &RunResult)]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut out = csv::Writer::from_path(dir.join(SUMMARY_FILE))?;
    for (w, r) in runs {
        let base = |step, lambda, mu, w1| TidyRow {
            task: &r.task,
            method: &r.method,
            w: *w,
            patient: &r.patient_id,
            seed: r.seed,
            oracle_score: r.oracle_score,
            step,
            lambda,
            mu,
            w1,
        };
        if r.lambda_trace.is_empty() {
            out.serialize(base(None, None, None, None))?;
        }
        for i in 0..r.lambda_trace.len() {
            out.serialize(base(Some(i + 1), Some(r.lambda_trace[i]), Some(r.mu_trace[i]), Some(r.w1_trace[i])))?;
        }
    }
    out.flush()
}

pub fn write_shift_csv(dir: &Path, per_w: &[(f64, Vec<MethodSummary>)]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut out = csv::Writer::from_path(dir.join(SHIFT_FILE))?;
    for (w, summaries) in per_w {
        for s in summaries {
            out.serialize(ShiftRow { w: *w, method: &s.method, n: s.n, mean: s.mean, sem: s.sem, rank: s.rank, avg_rank: s.avg_rank })?;
        }
    }
    out.flush()
}

/// Mean ± SEM per method with its rank and mean per-instance rank, best first.
pub fn ranking_table(summaries: &[MethodSummary]) -> String {
    let mut rows: Vec<&MethodSummary> = summaries.iter().collect();
    rows.sort_by(|a, b| a.rank.cmp(&b.rank).then_with(|| a.method.cmp(&b.method)));
    let width = rows.iter().map(|s| s.method.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<width$}  {:>24}  {:>4}  {:>8}\n", "method", "oracle score", "rank", "avg rank");
    for s in rows {
        let score = if s.degenerate { format!("{:.4}", s.mean) } else { format!("{:.4} ± {:.4}", s.mean, s.sem) };
        out.push_str(&format!("{:<width$}  {:>24}  {:>4}  {:>8.2}\n", s.method, score, s.rank, s.avg_rank));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(method: &str, mean: f64, rank: usize) -> MethodSummary {
        MethodSummary { method: method.into(), n: 2, mean, sem: 0.5, degenerate: false, rank, avg_rank: rank as f64 }
    }

    #[test]
    fn table_orders_by_rank() {
        let t = ranking_table(&[summary("b", 1.0, 2), summary("a", 3.0, 1)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("a ") && lines[1].contains("3.0000 ± 0.5000"));
        assert!(lines[2].starts_with("b "));
    }

    #[test]
    fn tidy_rows_per_step() {
        let dir = tempfile::tempdir().unwrap();
        let r = RunResult {
            task: "dose".into(),
            method: "leon".into(),
            seed: 0,
            patient_id: "p0".into(),
            final_design: serde_json::json!({"Dose": 1.0}),
            oracle_score: -1.0,
            lambda_trace: vec![0.0, 0.1],
            mu_trace: vec![1.0, 2.0],
            w1_trace: vec![0.0, 0.0],
            warnings: vec![],
        };
        let b = RunResult { method: "random-search".into(), lambda_trace: vec![], mu_trace: vec![], w1_trace: vec![], ..r.clone() };
        write_summary_csv(dir.path(), &[(Some(0.5), &r), (None, &b)]).unwrap();
        let text = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "task,method,w,patient,seed,oracle_score,step,lambda,mu,w1");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2], "dose,leon,0.5,p0,0,-1.0,2,0.1,2.0,0.0");
        assert_eq!(lines[3], "dose,random-search,,p0,0,-1.0,,,,");
    }
}
