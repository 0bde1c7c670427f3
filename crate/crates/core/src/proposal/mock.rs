//! Seeded offline proposal engines.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::prompt::PromptState;
use super::Proposer;
use crate::error::{invalid, Result};
use crate::memory::MemoryEntry;
use crate::numerics::stats::{entropy_unchecked, mean, population_std, softmax};
use crate::space::{Design, DesignSpace, DimKind, Value};

/// Parents eligible for perturbation in the memory-pool engine.
pub const TOP_PARENTS: usize = 8;
const SIGMA_RANGE: (f64, f64) = (1e-4, 0.25);

pub fn random_design(space: &DesignSpace, rng: &mut impl Rng) -> Design {
    let values = space
        .dims()
        .iter()
        .map(|d| match &d.kind {
            DimKind::Continuous { lo, hi } => Value::Real(rng.random_range(*lo..=*hi)),
            DimKind::Boolean => Value::Bool(rng.random_bool(0.5)),
            DimKind::Categorical { labels } => Value::Label(rng.random_range(0..labels.len())),
        })
        .collect();
    Design::new(values)
}

/// Gaussian move on every continuous coordinate (`sigma[i]` in units of the
/// dimension's range) plus a change of one random discrete coordinate.
fn perturb(space: &DesignSpace, d: &Design, sigma: &[f64], rng: &mut impl Rng) -> Design {
    let mut values = d.values.clone();
    for (i, dim) in space.dims().iter().enumerate() {
        if let (DimKind::Continuous { lo, hi }, Value::Real(x)) = (&dim.kind, values[i]) {
            let n = Normal::new(0.0, sigma[i]).expect("sigma is positive");
            values[i] = Value::Real((x + (hi - lo) * n.sample(rng)).clamp(*lo, *hi));
        }
    }
    let discrete: Vec<usize> = (0..space.arity()).filter(|&i| !space.dims()[i].is_continuous()).collect();
    if let Some(&i) = discrete.choose(rng) {
        values[i] = match (&space.dims()[i].kind, values[i]) {
            (DimKind::Boolean, Value::Bool(b)) => Value::Bool(!b),
            (DimKind::Categorical { labels }, Value::Label(l)) if labels.len() > 1 => {
                let shift = rng.random_range(1..labels.len());
                Value::Label((l + shift) % labels.len())
            }
            (_, v) => v,
        };
    }
    Design::new(values)
}

/// Indices of the `k` highest-scoring entries (earlier entries win ties).
fn top_k(entries: &[MemoryEntry], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..entries.len()).collect();
    idx.sort_by(|&a, &b| entries[b].score.total_cmp(&entries[a].score).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Draws `b` pool indices with replacement from `softmax(z / temp)`, where
/// `z` are standardized scores. `temp == 0` always picks the first maximum.
pub fn sample_from_pool(scores: &[f64], temp: f64, b: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if scores.is_empty() {
        return Err(invalid("empty candidate pool"));
    }
    if !(temp >= 0.0) || scores.iter().any(|s| !s.is_finite()) {
        return Err(invalid("pool scores and temperature must be finite, temp >= 0"));
    }
    if temp == 0.0 {
        let best = (0..scores.len()).fold(0, |best, i| if scores[i] > scores[best] { i } else { best });
        return Ok(vec![best; b]);
    }
    let m = mean(scores);
    let sd = population_std(scores);
    let logits: Vec<f64> = scores.iter().map(|s| if sd > 0.0 { (s - m) / sd / temp } else { 0.0 }).collect();
    let p = softmax(&logits);
    let mut cdf = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for x in &p {
        acc += x;
        cdf.push(acc);
    }
    Ok((0..b)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cdf.partition_point(|c| *c <= u).min(p.len() - 1)
        })
        .collect())
}

/// Deterministic one-line summary of a scored batch.
pub fn summary_reflection(space: &DesignSpace, batch: &[MemoryEntry]) -> String {
    if batch.is_empty() {
        return String::new();
    }
    let best = batch.iter().map(|e| e.score).fold(f64::NEG_INFINITY, f64::max);
    let worst = batch.iter().map(|e| e.score).fold(f64::INFINITY, f64::min);
    let mut hist: BTreeMap<String, usize> = BTreeMap::new();
    for e in batch {
        *hist.entry(space.design_to_json(&e.design).to_string()).or_default() += 1;
    }
    let n = batch.len() as f64;
    let p: Vec<f64> = hist.values().map(|c| *c as f64 / n).collect();
    format!("best score {best:.4}, worst score {worst:.4}, batch entropy {:.4}", entropy_unchecked(&p))
}

/// Uniform sampling per dimension.
#[derive(Debug, Clone)]
pub struct RandomEngine {
    rng: ChaCha8Rng,
}

impl RandomEngine {
    pub fn new(seed: u64) -> Self {
        RandomEngine { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Proposer for RandomEngine {
    fn propose(&mut self, state: &PromptState<'_>, b: usize, _: &mut Vec<String>) -> Result<Vec<Design>> {
        Ok((0..b).map(|_| random_design(state.space, &mut self.rng)).collect())
    }

    fn reflect(&mut self, space: &DesignSpace, batch: &[MemoryEntry], _: &str, _: &mut Vec<String>) -> String {
        summary_reflection(space, batch)
    }
}

/// Samples from a candidate pool of random designs and perturbations of the
/// best remembered designs, weighted by a softmax over scores.
#[derive(Debug, Clone)]
pub struct BoltzmannMemoryEngine {
    rng: ChaCha8Rng,
    pub temp: f64,
    pub pool_size: usize,
}

impl BoltzmannMemoryEngine {
    pub fn new(seed: u64, temp: f64, pool_size: usize) -> Result<Self> {
        if !(temp.is_finite() && temp >= 0.0) {
            return Err(invalid("temperature must be finite and >= 0"));
        }
        if pool_size == 0 {
            return Err(invalid("pool_size must be >= 1"));
        }
        Ok(BoltzmannMemoryEngine { rng: ChaCha8Rng::seed_from_u64(seed), temp, pool_size })
    }

    /// Candidate designs with the scores used for weighting.
    pub fn build_pool(&mut self, space: &DesignSpace, view: &[MemoryEntry]) -> (Vec<Design>, Vec<f64>) {
        let mut designs = Vec::with_capacity(self.pool_size);
        let mut scores = Vec::with_capacity(self.pool_size);
        let n_children = if view.is_empty() { 0 } else { self.pool_size / 2 };
        if n_children > 0 {
            let parents = top_k(view, TOP_PARENTS);
            let sigma: Vec<f64> = space
                .dims()
                .iter()
                .enumerate()
                .map(|(i, dim)| match &dim.kind {
                    DimKind::Continuous { lo, hi } => {
                        let u: Vec<f64> = parents
                            .iter()
                            .filter_map(|&p| match view[p].design.values[i] {
                                Value::Real(x) => Some((x - lo) / (hi - lo)),
                                _ => None,
                            })
                            .collect();
                        population_std(&u).clamp(SIGMA_RANGE.0, SIGMA_RANGE.1)
                    }
                    _ => 0.0,
                })
                .collect();
            for _ in 0..n_children {
                let &p = parents.choose(&mut self.rng).expect("view is non-empty");
                designs.push(perturb(space, &view[p].design, &sigma, &mut self.rng));
                scores.push(view[p].score);
            }
        }
        let base = if view.is_empty() { 0.0 } else { mean(&view.iter().map(|e| e.score).collect::<Vec<_>>()) };
        while designs.len() < self.pool_size {
            designs.push(random_design(space, &mut self.rng));
            scores.push(base);
        }
        (designs, scores)
    }
}

impl Proposer for BoltzmannMemoryEngine {
    fn propose(&mut self, state: &PromptState<'_>, b: usize, _: &mut Vec<String>) -> Result<Vec<Design>> {
        let (pool, scores) = self.build_pool(state.space, state.memory_view);
        let picks = sample_from_pool(&scores, self.temp, b, &mut self.rng)?;
        Ok(picks.into_iter().map(|i| pool[i].clone()).collect())
    }

    fn reflect(&mut self, space: &DesignSpace, batch: &[MemoryEntry], _: &str, _: &mut Vec<String>) -> String {
        summary_reflection(space, batch)
    }
}

/// Perturbations of the single best remembered design.
#[derive(Debug, Clone)]
pub struct HillClimbEngine {
    rng: ChaCha8Rng,
    pub step: f64,
}

impl HillClimbEngine {
    pub fn new(seed: u64, step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(invalid("hill-climb step must be > 0"));
        }
        Ok(HillClimbEngine { rng: ChaCha8Rng::seed_from_u64(seed), step })
    }
}

impl Proposer for HillClimbEngine {
    fn propose(&mut self, state: &PromptState<'_>, b: usize, _: &mut Vec<String>) -> Result<Vec<Design>> {
        let Some(&best) = top_k(state.memory_view, 1).first() else {
            return Ok((0..b).map(|_| random_design(state.space, &mut self.rng)).collect());
        };
        let parent = &state.memory_view[best].design;
        let sigma = vec![self.step; state.space.arity()];
        Ok((0..b).map(|_| perturb(state.space, parent, &sigma, &mut self.rng)).collect())
    }

    fn reflect(&mut self, space: &DesignSpace, batch: &[MemoryEntry], _: &str, _: &mut Vec<String>) -> String {
        summary_reflection(space, batch)
    }
}
