//! The outer optimization loop, final-design selection, baselines and
//! cohort evaluation.

pub mod baselines;
pub mod cohort;

use std::cell::Cell;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use baselines::{run_baseline, sa_accept, BaselineKind};
pub use cohort::{evaluate_cohort, Cohort, CohortReport, MethodSpec, MethodSummary, Oracle};

use crate::certainty::{
    boltzmann_weights, class_optima, dual_gradient, estimate_mu, score_designs, update_lambda, CertaintyState,
};
use crate::critic::{CriticConfig, CriticModel, SourcePool};
use crate::equivalence::{fit_partition, Partition, PartitionSpec};
use crate::error::{invalid, LeonError, Result};
use crate::memory::{Hyperparams, MemoryEntry, StepTrace, TrajectoryMemory};
use crate::proposal::knowledge::{KnowledgeSource, DEFAULT_TOOL_BUDGET};
use crate::proposal::{EngineSpec, PromptState, Proposer, MEMORY_VIEW};
use crate::space::{Context, Design, DesignSpace};
use crate::tasks::{Surrogate, Task};

/// Which stored quantity picks the returned design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// Maximum `mu_hat * raw` across all steps.
    #[default]
    Score,
    /// Maximum `f_hat + lambda c` across all steps.
    RawValue,
}

fn default_n_source() -> usize {
    256
}

/// Method-level settings of the certainty-guided optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeonConfig {
    /// Display name in reports; defaults to `leon`.
    pub label: Option<String>,
    pub engine: EngineSpec,
    pub partition: PartitionSpec,
    pub critic: CriticConfig,
    pub knowledge: Vec<KnowledgeSource>,
    pub knowledge_budget: usize,
    /// Size of the historical design pool drawn from the source policy.
    pub n_source: usize,
    pub memory_view: usize,
    pub selection: SelectionPolicy,
}

impl Default for LeonConfig {
    fn default() -> Self {
        LeonConfig {
            label: None,
            engine: EngineSpec::default(),
            partition: PartitionSpec::default(),
            critic: CriticConfig::default(),
            knowledge: Vec::new(),
            knowledge_budget: DEFAULT_TOOL_BUDGET,
            n_source: default_n_source(),
            memory_view: MEMORY_VIEW,
            selection: SelectionPolicy::Score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub hyper: Hyperparams,
    pub leon: LeonConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.leon.n_source == 0 {
            return Err(invalid("n_source must be >= 1"));
        }
        if self.leon.memory_view == 0 {
            return Err(invalid("memory_view must be >= 1"));
        }
        Ok(())
    }
}

/// Deterministic sub-seed for an independent random stream.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Surrogate access for one context, metered against the budget.
pub struct MeteredSurrogate<'a> {
    surrogate: &'a Surrogate,
    ctx: &'a Context,
    used: Cell<usize>,
    budget: usize,
}

impl<'a> MeteredSurrogate<'a> {
    pub fn new(surrogate: &'a Surrogate, ctx: &'a Context, budget: usize) -> Result<Self> {
        surrogate.task().check_context(ctx)?;
        Ok(MeteredSurrogate { surrogate, ctx, used: Cell::new(0), budget })
    }

    pub fn eval(&self, d: &Design) -> Result<f64> {
        if self.used.get() >= self.budget {
            return Err(LeonError::BudgetExhausted(self.budget));
        }
        self.used.set(self.used.get() + 1);
        self.surrogate.eval(d, self.ctx)
    }

    pub fn used(&self) -> usize {
        self.used.get()
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.used.get()
    }

    pub fn space(&self) -> &DesignSpace {
        self.surrogate.task().space()
    }
}

/// Everything a run produces before the single oracle call.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub method: String,
    pub final_design: Design,
    pub memory: TrajectoryMemory,
    pub final_lambda: f64,
    pub surrogate_evals: usize,
    pub warnings: Vec<String>,
    /// Set when the engine failed mid-run; traces cover the completed steps.
    pub aborted: bool,
}

/// Serialized record of one (method, patient, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub task: String,
    pub method: String,
    pub seed: u64,
    pub patient_id: String,
    pub final_design: serde_json::Value,
    pub oracle_score: f64,
    pub lambda_trace: Vec<f64>,
    pub mu_trace: Vec<f64>,
    pub w1_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

impl RunOutput {
    pub fn into_result(self, task: &Task, ctx: &Context, seed: u64, oracle_score: f64) -> RunResult {
        let traces = self.memory.traces();
        RunResult {
            task: task.name().to_string(),
            method: self.method,
            seed,
            patient_id: ctx.id.clone(),
            final_design: task.space().design_to_json(&self.final_design),
            oracle_score,
            lambda_trace: traces.iter().map(|t| t.lambda).collect(),
            mu_trace: traces.iter().map(|t| t.mu_hat).collect(),
            w1_trace: traces.iter().map(|t| t.w1_estimate).collect(),
            warnings: self.warnings,
        }
    }
}

/// Entry with the maximum stored score (or raw value); ties go to the
/// higher raw value, then the earliest entry.
pub fn select_final(memory: &TrajectoryMemory, policy: SelectionPolicy) -> Result<&MemoryEntry> {
    let key = |e: &MemoryEntry| match policy {
        SelectionPolicy::Score => e.score,
        SelectionPolicy::RawValue => e.raw_value,
    };
    let mut best: Option<&MemoryEntry> = None;
    for e in memory.entries() {
        best = match best {
            Some(b) if key(e) > key(b) || (key(e) == key(b) && e.raw_value > b.raw_value) => Some(e),
            Some(b) => Some(b),
            None => Some(e),
        };
    }
    best.ok_or_else(|| invalid("cannot select from an empty memory"))
}

/// Source pool and fitted equivalence relation, shared by every patient.
#[derive(Debug, Clone)]
pub struct LeonSetup {
    pub source: SourcePool,
    pub partition: Partition,
}

impl LeonSetup {
    pub fn prepare(task: &Task, surrogate: &Surrogate, cfg: &LeonConfig, seed: u64) -> Result<Self> {
        let data = task.source_data(cfg.n_source, derive_seed(seed, 1, 0));
        let source = SourcePool::new(task.space(), data.into_iter().map(|(_, d)| d).collect())?;
        let reference = Context::reference(task.ctx_dim);
        let value = |d: &Design| surrogate.eval(d, &reference);
        let partition = fit_partition(&cfg.partition, task, &source, &value, derive_seed(seed, 2, 0))?;
        Ok(LeonSetup { source, partition })
    }
}

/// Builds the configured engine and runs the loop for one context.
pub fn run_leon(setup: &LeonSetup, surrogate: &Surrogate, ctx: &Context, cfg: &RunConfig, seed: u64) -> Result<RunOutput> {
    let mut engine = cfg.leon.engine.build(derive_seed(seed, 3, 0), cfg.hyper.temperature)?;
    run_leon_with(setup, surrogate, ctx, cfg, seed, engine.as_mut())
}

/// The loop with an explicit proposer. Knowledge is generated once; each
/// step proposes, scores with the current `lambda`, re-estimates `mu`,
/// retrains the critic on the batch, takes a dual step in `lambda` and
/// stores `mu_hat * raw` as the score.
pub fn run_leon_with(
    setup: &LeonSetup,
    surrogate: &Surrogate,
    ctx: &Context,
    cfg: &RunConfig,
    seed: u64,
    engine: &mut dyn Proposer,
) -> Result<RunOutput> {
    cfg.validate()?;
    let hp = &cfg.hyper;
    let task = surrogate.task();
    let space = task.space();
    let meter = MeteredSurrogate::new(surrogate, ctx, hp.budget)?;
    let mut warnings = Vec::new();
    let knowledge = engine.generate_knowledge(&cfg.leon.knowledge, &task.description, ctx, cfg.leon.knowledge_budget, &mut warnings);

    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 4, 0));
    let mut critic = CriticModel::new(space.encoded_width(), &cfg.leon.critic, &mut init_rng);
    let critic_lr = cfg.leon.critic.lr.unwrap_or(hp.eta_critic);
    let mut state = CertaintyState::new(hp.lambda0);
    let mut memory = TrajectoryMemory::new(hp.budget);
    let mut aborted = false;
    let n_steps = hp.n_steps();

    for step in 1..=n_steps {
        let b = hp.batch_size.min(meter.remaining());
        if b == 0 {
            break;
        }
        let prompt = PromptState {
            task_name: task.name(),
            task_description: &task.description,
            space,
            context: ctx,
            knowledge: &knowledge,
            reflection: memory.last_reflection(),
            memory_view: memory.tail(cfg.leon.memory_view),
        };
        let designs = match engine.propose(&prompt, b, &mut warnings) {
            Ok(d) if d.len() == b => d,
            Ok(d) => Err(LeonError::InvalidInput(format!("engine returned {} designs, expected {b}", d.len())))?,
            Err(e) => {
                warnings.push(format!("engine failed at step {step}: {e}"));
                aborted = true;
                break;
            }
        };
        let encoded = designs.iter().map(|d| space.encode(d)).collect::<Result<Vec<_>>>()?;
        let f_hat = designs.iter().map(|d| meter.eval(d)).collect::<Result<Vec<_>>>()?;
        let c = encoded.iter().map(|u| critic.value_encoded(u)).collect::<Result<Vec<_>>>()?;
        let lambda = state.lambda;
        let raw: Vec<f64> = f_hat.iter().zip(&c).map(|(f, c)| f + lambda * c).collect();
        let classes = designs
            .iter()
            .zip(&raw)
            .map(|(d, r)| setup.partition.assign(space, ctx, d, *r))
            .collect::<Result<Vec<_>>>()?;
        let stats = class_optima(&f_hat, &c, &classes, lambda)?;
        let mu = estimate_mu(&stats, state.mu_hat, hp.mu_max);

        critic.train(&setup.source, &encoded, critic_lr, &cfg.leon.critic, derive_seed(seed, 5, step as u64))?;
        let w1 = critic.w1_estimate(setup.source.encoded(), &encoded)?;
        let mut refreshed = stats.clone();
        for cls in &mut refreshed.classes {
            cls.best_critic = critic.value_encoded(&encoded[cls.best_index])?;
        }
        let qbar = boltzmann_weights(&stats, mu);
        let grad = dual_gradient(hp.w0, critic.mean_value(setup.source.encoded())?, &refreshed, &qbar)?;
        state = update_lambda(state, grad, hp.eta_lambda, hp.constant_eta_lambda);
        state.mu_hat = mu;
        state.t += 1;

        let scores = score_designs(&raw, mu);
        let first = memory.len();
        for (i, d) in designs.into_iter().enumerate() {
            memory.push(MemoryEntry { step, design: d, raw_value: raw[i], score: scores[i], class_id: classes[i] })?;
        }
        memory.push_trace(StepTrace { lambda, mu_hat: mu, w1_estimate: w1, reflection: String::new() });
        log::debug!("step {step}: lambda {lambda:.4} -> {:.4}, mu {mu:.4}, w1 {w1:.6}", state.lambda);
        if step < n_steps {
            let batch = memory.entries()[first..].to_vec();
            let text = engine.reflect(space, &batch, &task.description, &mut warnings);
            memory.set_last_reflection(text);
        }
    }

    let final_design = select_final(&memory, cfg.leon.selection)?.design.clone();
    Ok(RunOutput {
        method: "leon".into(),
        final_design,
        final_lambda: state.lambda,
        surrogate_evals: meter.used(),
        memory,
        warnings,
        aborted,
    })
}
