//! Surrogate objectives: an analytic off-source distortion, a learned
//! regression net, and convex mixtures with the true objective.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Task;
use crate::error::{invalid, LeonError, Result};
use crate::numerics::stats::{mean, population_std};
use crate::numerics::{Adam, DenseNet};
use crate::space::{Context, Design};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurrogateSpec {
    AnalyticShift {
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default = "default_radius")]
        radius: f64,
    },
    Learned {
        #[serde(default = "default_n_src")]
        n_src: usize,
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
        #[serde(default = "default_epochs")]
        epochs: usize,
        #[serde(default = "default_lr")]
        lr: f64,
    },
}

fn default_beta() -> f64 {
    0.5
}
fn default_radius() -> f64 {
    1.0
}
fn default_n_src() -> usize {
    512
}
fn default_hidden() -> Vec<usize> {
    vec![32, 32]
}
fn default_epochs() -> usize {
    2000
}
fn default_lr() -> f64 {
    0.01
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        SurrogateSpec::AnalyticShift { beta: default_beta(), radius: default_radius() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SurrogateKind {
    /// `f + beta * max(0, |z - m_s| - radius) * bump(x)`.
    AnalyticShift { beta: f64, radius: f64 },
    /// Regression net over standardized `encode(x) ++ z`.
    Learned { net: DenseNet, in_mean: Vec<f64>, in_std: Vec<f64>, y_mean: f64, y_std: f64 },
    /// `w * f + (1 - w) * base`.
    Mixture { w: f64, base: Box<SurrogateKind> },
}

/// A deterministic stand-in for the objective, callable everywhere on the space.
#[derive(Debug, Clone)]
pub struct Surrogate {
    task: Task,
    kind: SurrogateKind,
}

impl Surrogate {
    pub fn new(task: &Task, spec: &SurrogateSpec, seed: u64) -> Result<Self> {
        let kind = match spec {
            SurrogateSpec::AnalyticShift { beta, radius } => {
                if !(beta.is_finite() && radius.is_finite() && *radius >= 0.0) {
                    return Err(invalid("analytic shift needs finite beta and radius >= 0"));
                }
                SurrogateKind::AnalyticShift { beta: *beta, radius: *radius }
            }
            SurrogateSpec::Learned { n_src, hidden, epochs, lr } => {
                let data = task.source_data(*n_src, seed);
                let (xs, ys) = labeled(task, &data)?;
                fit_learned(&xs, &ys, hidden, *epochs, *lr, seed)?
            }
        };
        Ok(Surrogate { task: task.clone(), kind })
    }

    pub fn from_kind(task: &Task, kind: SurrogateKind) -> Self {
        Surrogate { task: task.clone(), kind }
    }

    /// Trains a learned surrogate on explicit `(context, design)` pairs.
    pub fn learned_from(task: &Task, data: &[(Context, Design)], hidden: &[usize], epochs: usize, lr: f64, seed: u64) -> Result<Self> {
        let (xs, ys) = labeled(task, data)?;
        Ok(Surrogate { task: task.clone(), kind: fit_learned(&xs, &ys, hidden, epochs, lr, seed)? })
    }

    pub fn kind(&self) -> &SurrogateKind {
        &self.kind
    }

    pub fn task(&self) -> &Task {
        &self.task
    }

    /// `w * f + (1 - w) * self`.
    pub fn mix(&self, w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(invalid(format!("mixture weight {w} outside [0, 1]")));
        }
        Ok(Surrogate {
            task: self.task.clone(),
            kind: SurrogateKind::Mixture { w, base: Box::new(self.kind.clone()) },
        })
    }

    pub fn shift_distance(&self, z: &[f64], radius: f64) -> f64 {
        let d: f64 = z.iter().zip(&self.task.source_mean).map(|(a, b)| (a - b) * (a - b)).sum();
        (d.sqrt() - radius).max(0.0)
    }

    fn eval_kind(&self, kind: &SurrogateKind, u: &[f64], z: &[f64]) -> f64 {
        match kind {
            SurrogateKind::AnalyticShift { beta, radius } => {
                let f = self.task.objective_encoded(u, z);
                let d = self.shift_distance(z, *radius);
                if d == 0.0 || *beta == 0.0 {
                    f
                } else {
                    f + beta * d * self.task.bump.eval(u)
                }
            }
            SurrogateKind::Learned { net, in_mean, in_std, y_mean, y_std } => {
                let x: Vec<f64> = u
                    .iter()
                    .chain(z)
                    .zip(in_mean.iter().zip(in_std))
                    .map(|(v, (m, s))| (v - m) / s)
                    .collect();
                y_mean + y_std * net.forward_unchecked(&x)
            }
            SurrogateKind::Mixture { w, base } => {
                let f = self.task.objective_encoded(u, z);
                if *w == 1.0 {
                    f
                } else if *w == 0.0 {
                    self.eval_kind(base, u, z)
                } else {
                    w * f + (1.0 - w) * self.eval_kind(base, u, z)
                }
            }
        }
    }

    /// `f_hat(x; z)` on an encoded design.
    pub fn eval_encoded(&self, u: &[f64], z: &[f64]) -> f64 {
        self.eval_kind(&self.kind, u, z)
    }

    pub fn eval(&self, d: &Design, ctx: &Context) -> Result<f64> {
        self.task.check_context(ctx)?;
        let v = self.eval_encoded(&self.task.space.encode(d)?, &ctx.features);
        if !v.is_finite() {
            return Err(LeonError::Numeric("surrogate returned a non-finite value".into()));
        }
        Ok(v)
    }
}

fn labeled(task: &Task, data: &[(Context, Design)]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut xs = Vec::with_capacity(data.len());
    let mut ys = Vec::with_capacity(data.len());
    for (c, d) in data {
        let mut u = task.space.encode(d)?;
        ys.push(task.objective_encoded(&u, &c.features));
        u.extend_from_slice(&c.features);
        xs.push(u);
    }
    Ok((xs, ys))
}

fn fit_learned(xs: &[Vec<f64>], ys: &[f64], hidden: &[usize], epochs: usize, lr: f64, seed: u64) -> Result<SurrogateKind> {
    if xs.len() < 2 {
        return Err(invalid("learned surrogate needs at least two samples"));
    }
    let width = xs[0].len();
    let in_mean: Vec<f64> = (0..width).map(|j| mean(&xs.iter().map(|x| x[j]).collect::<Vec<_>>())).collect();
    let in_std: Vec<f64> = (0..width)
        .map(|j| {
            let s = population_std(&xs.iter().map(|x| x[j]).collect::<Vec<_>>());
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let y_mean = mean(ys);
    let y_std = population_std(ys).max(1e-12);
    let sx: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| x.iter().zip(in_mean.iter().zip(&in_std)).map(|(v, (m, s))| (v - m) / s).collect())
        .collect();
    let sy: Vec<f64> = ys.iter().map(|y| (y - y_mean) / y_std).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51u64);
    let mut net = DenseNet::glorot(width, hidden, &mut rng);
    let mut opt = Adam::new(&net, lr);
    for epoch in 0..epochs {
        let (loss, grad) = net.mse_gradient(&sx, &sy)?;
        if !loss.is_finite() {
            return Err(LeonError::Numeric(format!("surrogate training diverged at epoch {epoch}")));
        }
        opt.step(&mut net, &grad)?;
    }
    Ok(SurrogateKind::Learned { net, in_mean, in_std, y_mean, y_std })
}
