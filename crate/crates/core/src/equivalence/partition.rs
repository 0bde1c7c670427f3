//! Equivalence relations over designs and class bookkeeping.

use serde::{Deserialize, Serialize};

use super::embed::{fnv1a, EmbeddingProvider, EmbeddingSpec};
use crate::critic::SourcePool;
use crate::error::{invalid, Result};
use crate::numerics::kmeans::{elbow_select_k, kmeans_fit, KMeansModel, Metric};
use crate::numerics::stats::{mean, population_std, shannon_entropy};
use crate::space::{render_text, Context, Design, DesignSpace, Value};
use crate::tasks::Task;

pub const RANDOM_CLASSES: usize = 10;
/// Finite score-bin thresholds are `mu + k sigma` for these `k`.
pub const SCORE_SIGMAS: [f64; 9] = [-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionSpec {
    Kmeans {
        #[serde(default)]
        embedding: EmbeddingSpec,
        #[serde(default = "default_kmin")]
        kmin: usize,
        #[serde(default = "default_kmax")]
        kmax: usize,
        #[serde(default)]
        assign_context: AssignContext,
    },
    Random {
        #[serde(default = "default_random_classes")]
        n: usize,
    },
    ScoreBinned,
}

/// Context rendered into design texts at assignment time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignContext {
    /// The all-zero context the centroids were fitted under.
    #[default]
    Reference,
    /// The patient context of the run.
    Live,
}

fn default_kmin() -> usize {
    2
}
fn default_kmax() -> usize {
    20
}
fn default_random_classes() -> usize {
    RANDOM_CLASSES
}

impl Default for PartitionSpec {
    fn default() -> Self {
        PartitionSpec::Kmeans { embedding: EmbeddingSpec::default(), kmin: 2, kmax: 20, assign_context: AssignContext::default() }
    }
}

#[derive(Debug, Clone)]
pub enum Partition {
    Kmeans { model: KMeansModel, provider: EmbeddingProvider, task_name: String, assign_context: AssignContext },
    Random { n: usize, seed: u64 },
    /// Ten bins `[tau_i, tau_{i+1})` over `-inf, mu - 4 sigma, ..., mu + 4 sigma, +inf`.
    ScoreBinned { mu: f64, sigma: f64 },
}

impl Partition {
    /// Cosine k-means over embedded texts, with k chosen by the elbow rule.
    /// `kmax` shrinks to the number of texts when there are too few.
    pub fn fit_kmeans(texts: &[String], provider: EmbeddingProvider, task_name: &str, kmin: usize, kmax: usize, seed: u64) -> Result<Self> {
        if texts.is_empty() {
            return Err(invalid("cannot fit a partition on zero designs"));
        }
        let mut kmax = kmax;
        if texts.len() < kmax {
            log::warn!("only {} source designs; shrinking kmax from {kmax}", texts.len());
            kmax = texts.len();
        }
        let kmin = kmin.min(kmax).max(1);
        let points = texts.iter().map(|t| provider.embed(t)).collect::<Result<Vec<_>>>()?;
        let k = elbow_select_k(&points, kmin, kmax, Metric::Cosine, seed)?;
        let model = kmeans_fit(&points, k, Metric::Cosine, seed, 100)?;
        Ok(Partition::Kmeans { model, provider, task_name: task_name.to_string(), assign_context: AssignContext::default() })
    }

    pub fn random(n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("random partition needs at least one class"));
        }
        Ok(Partition::Random { n, seed })
    }

    /// Bins fitted to the mean and standard deviation of source scores.
    pub fn score_binned(values: &[f64]) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("score bins need finite source values"));
        }
        Ok(Partition::ScoreBinned { mu: mean(values), sigma: population_std(values) })
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Partition::Kmeans { model, .. } => model.k(),
            Partition::Random { n, .. } => *n,
            Partition::ScoreBinned { .. } => SCORE_SIGMAS.len() + 1,
        }
    }

    /// All 11 bin edges, infinite ends included.
    pub fn thresholds(&self) -> Option<Vec<f64>> {
        match self {
            Partition::ScoreBinned { mu, sigma } => {
                let mut t = vec![f64::NEG_INFINITY];
                t.extend(SCORE_SIGMAS.iter().map(|k| mu + k * sigma));
                t.push(f64::INFINITY);
                Some(t)
            }
            _ => None,
        }
    }

    pub fn assign(&self, space: &DesignSpace, ctx: &Context, d: &Design, raw_value: f64) -> Result<usize> {
        match self {
            Partition::Kmeans { model, provider, task_name, assign_context } => {
                let text = match assign_context {
                    AssignContext::Live => render_text(task_name, space, ctx, d)?,
                    AssignContext::Reference => render_text(task_name, space, &Context::reference(ctx.features.len()), d)?,
                };
                model.assign(&provider.embed(&text)?)
            }
            Partition::Random { n, seed } => {
                space.validate(d)?;
                Ok((design_hash(d, *seed) % *n as u64) as usize)
            }
            Partition::ScoreBinned { mu, sigma } => {
                // number of finite thresholds at or below the value
                Ok(SCORE_SIGMAS.iter().filter(|k| mu + *k * sigma <= raw_value).count())
            }
        }
    }
}

fn design_hash(d: &Design, seed: u64) -> u64 {
    let mut bytes = Vec::with_capacity(d.values.len() * 9);
    for v in &d.values {
        match v {
            Value::Real(x) => {
                bytes.push(0);
                // +0.0 and -0.0 are the same design
                bytes.extend_from_slice(&(x + 0.0).to_bits().to_le_bytes());
            }
            Value::Bool(b) => bytes.extend_from_slice(&[1, u8::from(*b)]),
            Value::Label(i) => {
                bytes.push(2);
                bytes.extend_from_slice(&(*i as u64).to_le_bytes());
            }
        }
    }
    fnv1a(seed, &bytes)
}

/// Fits the configured relation. The k-means variant renders source designs
/// with an all-zero reference context; the score variant bins
/// `source_value(x)` over the pool.
pub fn fit_partition(
    spec: &PartitionSpec,
    task: &Task,
    src: &SourcePool,
    source_value: &dyn Fn(&Design) -> Result<f64>,
    seed: u64,
) -> Result<Partition> {
    match spec {
        PartitionSpec::Kmeans { embedding, kmin, kmax, assign_context } => {
            let reference = Context::reference(task.ctx_dim);
            let texts = src
                .designs()
                .iter()
                .map(|d| render_text(task.name(), task.space(), &reference, d))
                .collect::<Result<Vec<_>>>()?;
            let provider = EmbeddingProvider::from_spec(embedding)?;
            let mut p = Partition::fit_kmeans(&texts, provider, task.name(), *kmin, *kmax, seed)?;
            if let Partition::Kmeans { assign_context: a, .. } = &mut p {
                *a = *assign_context;
            }
            Ok(p)
        }
        PartitionSpec::Random { n } => Partition::random(*n, seed),
        PartitionSpec::ScoreBinned => {
            let values = src.designs().iter().map(source_value).collect::<Result<Vec<_>>>()?;
            Partition::score_binned(&values)
        }
    }
}

/// Empirical class frequencies `count_i / total`.
pub fn occupancies(assignments: &[usize], n_classes: usize) -> Result<Vec<f64>> {
    if assignments.is_empty() {
        return Err(invalid("no assignments"));
    }
    let mut counts = vec![0usize; n_classes];
    for a in assignments {
        *counts
            .get_mut(*a)
            .ok_or_else(|| invalid(format!("class id {a} out of range for {n_classes} classes")))? += 1;
    }
    let n = assignments.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Coarse-grained entropy of a distribution over classes.
pub fn coarse_entropy(qbar: &[f64]) -> Result<f64> {
    shannon_entropy(qbar)
}
