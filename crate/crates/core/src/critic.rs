//! The source critic: a weight-clipped network whose mean difference between
//! source and generated designs lower-bounds (a multiple of) their
//! 1-Wasserstein distance.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LeonError, Result};
use crate::numerics::{Adam, DenseNet};
use crate::space::{Design, DesignSpace};

/// Largest source batch used per training iteration.
pub const SOURCE_BATCH_CAP: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticConfig {
    pub hidden: Vec<usize>,
    pub optimizer: CriticOptimizer,
    pub clip: f64,
    /// Overrides the hyperparameter learning rate when set.
    pub lr: Option<f64>,
    pub tol: f64,
    pub patience: usize,
    pub max_iters: usize,
}

impl Default for CriticConfig {
    fn default() -> Self {
        CriticConfig { hidden: vec![64, 64], optimizer: CriticOptimizer::Adam, clip: 0.01, lr: None, tol: 1e-4, patience: 5, max_iters: 500 }
    }
}

/// Update rule for critic training; both clamp every parameter after a step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticOptimizer {
    /// Per-parameter normalized steps of size about `lr`.
    #[default]
    Adam,
    /// Plain gradient ascent `theta += lr * grad`.
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticModel {
    #[serde(flatten)]
    pub net: DenseNet,
    pub clip: f64,
}

/// Source designs with their cached encodings. Holds no context data.
#[derive(Debug, Clone)]
pub struct SourcePool {
    designs: Vec<Design>,
    encoded: Vec<Vec<f64>>,
}

impl SourcePool {
    pub fn new(space: &DesignSpace, designs: Vec<Design>) -> Result<Self> {
        if designs.is_empty() {
            return Err(invalid("source pool must be non-empty"));
        }
        let encoded = designs.iter().map(|d| space.encode(d)).collect::<Result<_>>()?;
        Ok(SourcePool { designs, encoded })
    }

    pub fn from_encoded(encoded: Vec<Vec<f64>>) -> Result<Self> {
        if encoded.is_empty() {
            return Err(invalid("source pool must be non-empty"));
        }
        Ok(SourcePool { designs: Vec::new(), encoded })
    }

    pub fn designs(&self) -> &[Design] {
        &self.designs
    }

    pub fn encoded(&self) -> &[Vec<f64>] {
        &self.encoded
    }

    pub fn len(&self) -> usize {
        self.encoded.len()
    }

    pub fn is_empty(&self) -> bool {
        self.encoded.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub iterations: usize,
    pub converged: bool,
    pub w1_estimate: f64,
}

impl CriticModel {
    pub fn new<R: rand::Rng + ?Sized>(input_dim: usize, cfg: &CriticConfig, rng: &mut R) -> Self {
        CriticModel { net: DenseNet::random(input_dim, &cfg.hidden, cfg.clip, rng), clip: cfg.clip }
    }

    pub fn zeros(input_dim: usize, cfg: &CriticConfig) -> Self {
        CriticModel { net: DenseNet::zeros(input_dim, &cfg.hidden), clip: cfg.clip }
    }

    pub fn value(&self, space: &DesignSpace, d: &Design) -> Result<f64> {
        self.net.forward(&space.encode(d)?)
    }

    pub fn value_encoded(&self, x: &[f64]) -> Result<f64> {
        self.net.forward(x)
    }

    pub fn mean_value(&self, xs: &[Vec<f64>]) -> Result<f64> {
        if xs.is_empty() {
            return Err(invalid("empty batch"));
        }
        let mut total = 0.0;
        for x in xs {
            total += self.net.forward(x)?;
        }
        Ok(total / xs.len() as f64)
    }

    /// `mean c(src) - mean c(gen)`.
    pub fn w1_estimate(&self, src: &[Vec<f64>], gen: &[Vec<f64>]) -> Result<f64> {
        Ok(self.mean_value(src)? - self.mean_value(gen)?)
    }

    /// Gradient ascent on the dual objective with parameter clipping, until
    /// the estimate moves by less than `tol` for `patience` consecutive
    /// iterations or `max_iters` is reached. On a non-finite estimate the
    /// model is restored to its last finite state and an error returned.
    pub fn train(
        &mut self,
        src: &SourcePool,
        gen: &[Vec<f64>],
        lr: f64,
        cfg: &CriticConfig,
        seed: u64,
    ) -> Result<TrainReport> {
        if gen.is_empty() {
            return Err(invalid("generated batch must be non-empty"));
        }
        if !(lr > 0.0) {
            return Err(invalid("critic learning rate must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let subsample = src.len() > SOURCE_BATCH_CAP;
        let mut batch: Vec<Vec<f64>> = if subsample { Vec::new() } else { src.encoded().to_vec() };
        let mut adam = Adam::new(&self.net, lr);
        let mut prev = self.w1_estimate(src.encoded(), gen)?;
        let mut quiet = 0;
        let mut iterations = 0;
        while iterations < cfg.max_iters {
            if subsample {
                batch = sample(&mut rng, src.len(), SOURCE_BATCH_CAP)
                    .into_iter()
                    .map(|i| src.encoded()[i].clone())
                    .collect();
            }
            let last_good = self.net.clone();
            let mut grad = self.net.dual_gradient(&batch, gen)?;
            match cfg.optimizer {
                CriticOptimizer::Sgd => self.net.sgd_step(&grad, lr, Some(self.clip))?,
                CriticOptimizer::Adam => {
                    grad.scale(-1.0);
                    adam.step(&mut self.net, &grad)?;
                    self.net.clip_params(self.clip);
                }
            }
            iterations += 1;
            let w1 = self.w1_estimate(&batch, gen)?;
            if !w1.is_finite() {
                self.net = last_good;
                return Err(LeonError::Numeric("critic objective became non-finite".into()));
            }
            if (w1 - prev).abs() < cfg.tol {
                quiet += 1;
            } else {
                quiet = 0;
            }
            prev = w1;
            if quiet >= cfg.patience {
                break;
            }
        }
        Ok(TrainReport {
            iterations,
            converged: quiet >= cfg.patience,
            w1_estimate: self.w1_estimate(src.encoded(), gen)?,
        })
    }
}
