//! Cohort evaluation: every configured method on the same target patients,
//! with the oracle confined to this harness.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{run_baseline, BaselineKind};
use super::{derive_seed, run_leon, LeonConfig, LeonSetup, RunConfig, RunOutput, RunResult};
use crate::error::{invalid, LeonError, Result};
use crate::memory::Hyperparams;
use crate::numerics::stats::{mean, sem};
use crate::space::{Context, Design};
use crate::tasks::{Surrogate, Task};

/// Ground-truth scorer with a call counter. Optimizers never receive it.
pub struct Oracle<'a> {
    task: &'a Task,
    calls: AtomicUsize,
}

impl<'a> Oracle<'a> {
    pub fn new(task: &'a Task) -> Self {
        Oracle { task, calls: AtomicUsize::new(0) }
    }

    pub fn score(&self, d: &Design, ctx: &Context) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.task.oracle_eval(d, ctx)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum MethodSpec {
    Leon(LeonConfig),
    RandomSearch,
    SimulatedAnnealing,
    SurrogateGreedy,
}

impl MethodSpec {
    pub fn name(&self) -> String {
        match self {
            MethodSpec::Leon(c) => c.label.clone().unwrap_or_else(|| "leon".into()),
            MethodSpec::RandomSearch => BaselineKind::RandomSearch.name().into(),
            MethodSpec::SimulatedAnnealing => BaselineKind::SimulatedAnnealing.name().into(),
            MethodSpec::SurrogateGreedy => BaselineKind::SurrogateGreedy.name().into(),
        }
    }

    pub fn baseline(&self) -> Option<BaselineKind> {
        match self {
            MethodSpec::Leon(_) => None,
            MethodSpec::RandomSearch => Some(BaselineKind::RandomSearch),
            MethodSpec::SimulatedAnnealing => Some(BaselineKind::SimulatedAnnealing),
            MethodSpec::SurrogateGreedy => Some(BaselineKind::SurrogateGreedy),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub hyper: Hyperparams,
    pub methods: Vec<MethodSpec>,
    pub n_patients: usize,
    pub seeds: Vec<u64>,
    /// Seed of the target-patient draw, shared by every method and seed.
    pub context_seed: u64,
    /// Worker threads; 1 runs sequentially.
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub n: usize,
    pub mean: f64,
    pub sem: f64,
    /// Set when a single run makes the standard error meaningless.
    pub degenerate: bool,
    /// Rank of the mean among methods, 1 is best; ties share the lower rank.
    pub rank: usize,
    /// Mean per-instance rank across (patient, seed) pairs.
    pub avg_rank: f64,
}

#[derive(Debug, Clone)]
pub struct CohortReport {
    pub contexts: Vec<Context>,
    /// One record per (method, seed, patient), in that nesting order.
    pub results: Vec<RunResult>,
    pub summaries: Vec<MethodSummary>,
    pub oracle_calls: usize,
    pub surrogate_evals: Vec<usize>,
    pub failures: Vec<String>,
}

/// Ranks with ties sharing the best position (`1, 1, 3`), higher is better.
pub fn competition_ranks(values: &[f64]) -> Vec<usize> {
    values.iter().map(|v| 1 + values.iter().filter(|w| *w > v).count()).collect()
}

pub fn summarize(method: &str, scores: &[f64]) -> MethodSummary {
    MethodSummary {
        method: method.to_string(),
        n: scores.len(),
        mean: if scores.is_empty() { f64::NAN } else { mean(scores) },
        sem: if scores.len() > 1 { sem(scores) } else { 0.0 },
        degenerate: scores.len() <= 1,
        rank: 0,
        avg_rank: f64::NAN,
    }
}

enum Prepared {
    Leon(Box<LeonSetup>, RunConfig),
    Baseline(BaselineKind),
}

pub fn evaluate_cohort(task: &Task, surrogate: &Surrogate, cohort: &Cohort) -> Result<CohortReport> {
    if cohort.n_patients == 0 {
        return Err(invalid("n_patients must be >= 1"));
    }
    if cohort.seeds.is_empty() || cohort.methods.is_empty() {
        return Err(invalid("a cohort needs at least one seed and one method"));
    }
    cohort.hyper.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cohort.context_seed);
    let contexts = task.sample_target_contexts(cohort.n_patients, &mut rng);
    let prepared = cohort
        .methods
        .iter()
        .map(|m| match m {
            MethodSpec::Leon(cfg) => {
                let run = RunConfig { hyper: cohort.hyper.clone(), leon: cfg.clone() };
                run.validate()?;
                Ok(Prepared::Leon(Box::new(LeonSetup::prepare(task, surrogate, cfg, cohort.context_seed)?), run))
            }
            other => Ok(Prepared::Baseline(other.baseline().expect("non-leon method"))),
        })
        .collect::<Result<Vec<_>>>()?;

    let mut jobs = Vec::new();
    for mi in 0..cohort.methods.len() {
        for &seed in &cohort.seeds {
            for pi in 0..contexts.len() {
                jobs.push((mi, seed, pi));
            }
        }
    }
    let oracle = Oracle::new(task);
    let run_one = |&(mi, seed, pi): &(usize, u64, usize)| -> Result<(RunResult, usize)> {
        let ctx = &contexts[pi];
        let run_seed = derive_seed(seed, pi as u64, 0);
        let out: RunOutput = match &prepared[mi] {
            Prepared::Leon(setup, cfg) => run_leon(setup, surrogate, ctx, cfg, run_seed)?,
            Prepared::Baseline(kind) => run_baseline(*kind, surrogate, ctx, cohort.hyper.budget, run_seed)?,
        };
        let evals = out.surrogate_evals;
        let mut out = out;
        out.method = cohort.methods[mi].name();
        let score = oracle.score(&out.final_design, ctx)?;
        Ok((out.into_result(task, ctx, seed, score), evals))
    };
    let outcomes: Vec<Result<(RunResult, usize)>> = if cohort.jobs <= 1 {
        jobs.iter().map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cohort.jobs)
            .build()
            .map_err(|e| LeonError::InvalidInput(format!("cannot start {} workers: {e}", cohort.jobs)))?;
        pool.install(|| jobs.par_iter().map(run_one).collect())
    };

    let mut results = Vec::new();
    let mut surrogate_evals = Vec::new();
    let mut failures = Vec::new();
    let mut grid: Vec<Vec<Option<f64>>> = vec![vec![None; cohort.seeds.len() * contexts.len()]; cohort.methods.len()];
    for (job, outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok((r, evals)) => {
                let (mi, seed, pi) = *job;
                let si = cohort.seeds.iter().position(|s| *s == seed).expect("seed from list");
                grid[mi][si * contexts.len() + pi] = Some(r.oracle_score);
                results.push(r);
                surrogate_evals.push(evals);
            }
            Err(e) => failures.push(format!("{} / seed {} / {}: {e}", cohort.methods[job.0].name(), job.1, contexts[job.2].id)),
        }
    }

    let mut summaries: Vec<MethodSummary> = cohort
        .methods
        .iter()
        .zip(&grid)
        .map(|(m, row)| summarize(&m.name(), &row.iter().flatten().copied().collect::<Vec<_>>()))
        .collect();
    let means: Vec<f64> = summaries.iter().map(|s| if s.mean.is_nan() { f64::NEG_INFINITY } else { s.mean }).collect();
    let mut rank_sum = vec![0.0; summaries.len()];
    let mut complete = 0usize;
    for inst in 0..grid[0].len() {
        let col: Option<Vec<f64>> = grid.iter().map(|row| row[inst]).collect();
        if let Some(col) = col {
            for (i, r) in competition_ranks(&col).into_iter().enumerate() {
                rank_sum[i] += r as f64;
            }
            complete += 1;
        }
    }
    for (i, (s, r)) in summaries.iter_mut().zip(competition_ranks(&means)).enumerate() {
        s.rank = r;
        s.avg_rank = if complete > 0 { rank_sum[i] / complete as f64 } else { f64::NAN };
    }
    Ok(CohortReport { contexts, results, summaries, oracle_calls: oracle.calls(), surrogate_evals, failures })
}
