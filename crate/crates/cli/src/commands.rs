//! Subcommand bodies. Each returns the process exit code.

use std::io::Write;
use std::path::Path;

use leon_core::optimizer::{evaluate_cohort, CohortReport, MethodSummary, RunResult};
use leon_core::tasks::make_task;
use leon_core::verify;

use crate::config::ExperimentConfig;
use crate::report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUN: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Run(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Run(_) => EXIT_RUN,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Run(m) => m,
        }
    }
}

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

fn report_failures(rep: &CohortReport) -> Result<(), CliError> {
    for f in &rep.failures {
        eprintln!("run failed: {f}");
    }
    if rep.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Run(format!("{} runs failed; partial results written", rep.failures.len())))
    }
}

pub fn run(config: &Path, jobs: usize) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(config).map_err(CliError::Config)?;
    let task = cfg.task();
    let surrogate = cfg.surrogate(&task).map_err(run_err)?;
    let rep = evaluate_cohort(&task, &surrogate, &cfg.cohort(jobs)).map_err(run_err)?;
    report::write_results(&cfg.output, &rep.results).map_err(run_err)?;
    let runs: Vec<(Option<f64>, &RunResult)> = rep.results.iter().map(|r| (None, r)).collect();
    report::write_summary_csv(&cfg.output, &runs).map_err(run_err)?;
    println!("{} on {} patients x {} seeds", cfg.task, cfg.n_patients, cfg.seeds.len());
    print!("{}", report::ranking_table(&rep.summaries));
    println!("oracle calls: {}; results in {}", rep.oracle_calls, cfg.output.display());
    report_failures(&rep)
}

pub fn ablate_shift(config: &Path, weights: Option<Vec<f64>>, jobs: usize) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(config).map_err(CliError::Config)?;
    let weights = weights
        .or_else(|| cfg.weights.clone())
        .ok_or_else(|| CliError::Config("no mixture weights: pass --weights or set `weights`".into()))?;
    let task = cfg.task();
    let base = cfg.surrogate(&task).map_err(run_err)?;
    let cohort = cfg.cohort(jobs);
    let mut reports = Vec::new();
    for &w in &weights {
        let surrogate = base.mix(w).map_err(run_err)?;
        reports.push((w, evaluate_cohort(&task, &surrogate, &cohort).map_err(run_err)?));
    }
    let results: Vec<RunResult> = reports.iter().flat_map(|(_, r)| r.results.iter().cloned()).collect();
    report::write_results(&cfg.output, &results).map_err(run_err)?;
    let runs: Vec<(Option<f64>, &RunResult)> =
        reports.iter().flat_map(|(w, r)| r.results.iter().map(move |x| (Some(*w), x))).collect();
    report::write_summary_csv(&cfg.output, &runs).map_err(run_err)?;
    let per_w: Vec<(f64, Vec<MethodSummary>)> = reports.iter().map(|(w, r)| (*w, r.summaries.clone())).collect();
    report::write_shift_csv(&cfg.output, &per_w).map_err(run_err)?;
    for (w, rep) in &reports {
        println!("w = {w}");
        print!("{}", report::ranking_table(&rep.summaries));
    }
    println!("results in {}", cfg.output.display());
    reports.iter().try_for_each(|(_, r)| report_failures(r))
}

pub fn verify() -> Result<(), CliError> {
    let results = verify::run_all();
    for r in &results {
        println!(
            "{} {:<24} {:>9.3}s  {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.elapsed.as_secs_f64(),
            r.detail
        );
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Run(format!("failed checks: {}", failed.join(", "))))
    }
}

pub fn dump_task(name: &str, seed: u64) -> Result<(), CliError> {
    let task = make_task(name, seed).map_err(|e| CliError::Config(e.to_string()))?;
    let text = serde_json::to_string_pretty(&task).map_err(run_err)?;
    // A closed pipe (`leon dump-task ... | head`) is not an error.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}
