//! Synthetic conditional optimization tasks with a covariate shift between
//! source and target contexts.
//!
//! * `dose`: one continuous dose in `[0, 100]`, objective `-(x - g(z))^2`
//!   with `g` affine in a 4-dimensional context.
//! * `regimen`: sixteen on/off treatment components, objective
//!   `w(z) . x + x' Q x` with context-linear unary weights and a fixed sparse
//!   symmetric pairwise matrix.
//!
//! Source contexts are `N(0, I)`; target contexts are `N(1, I)`, a mean shift
//! of Euclidean length 2.

pub mod bound;
pub mod surrogate;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{LeonError, Result};
use crate::space::{render_context, Context, Design, DesignSpace, Dim};

pub use bound::{shift_bound_check, BoundCheck};
pub use surrogate::{Surrogate, SurrogateKind, SurrogateSpec};

pub const CTX_DIM: usize = 4;
pub const TASK_NAMES: [&str; 2] = ["dose", "regimen"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    /// `-(x - (intercept + slope * a . z))^2` on the raw dose scale.
    Dose { intercept: f64, slope: f64, a: Vec<f64> },
    /// `(w0 + W z) . x + x' Q x`, `Q` symmetric with zero diagonal.
    Regimen { w0: Vec<f64>, w: Vec<Vec<f64>>, q: Vec<Vec<f64>> },
}

/// Gaussian bump used by the analytic surrogate, in encoded design space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub width: f64,
    pub height: f64,
}

impl Bump {
    pub fn eval(&self, u: &[f64]) -> f64 {
        let d2: f64 = u.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        self.height * (-d2 / (2.0 * self.width * self.width)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub name: String,
    pub seed: u64,
    pub description: String,
    pub space: DesignSpace,
    pub ctx_dim: usize,
    pub source_mean: Vec<f64>,
    pub target_mean: Vec<f64>,
    /// Noise of the source treatment policy (dose units, or logit noise for
    /// regimen components).
    pub policy_noise: f64,
    pub objective: Objective,
    pub bump: Bump,
    pub maximize: bool,
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Builds a named task. The seed only affects randomly drawn constants
/// (the regimen weights); `dose` is fully fixed.
pub fn make_task(name: &str, seed: u64) -> Result<Task> {
    match name {
        "dose" => Ok(Task::dose()),
        "regimen" => Ok(Task::regimen(16, 1.0, seed)),
        other => Err(LeonError::UnknownTask(other.to_string())),
    }
}

impl Task {
    pub fn dose() -> Self {
        Task {
            name: "dose".into(),
            seed: 0,
            description: "Choose a single weekly dose between 0 and 100 units for the patient described \
                          below. Each patient has an individual ideal dose determined by their features; \
                          the score is the negative squared distance from that ideal dose, so higher is \
                          better and 0 is perfect."
                .into(),
            space: DesignSpace::new(vec![Dim::continuous("Dose", 0.0, 100.0)]).expect("static space"),
            ctx_dim: CTX_DIM,
            source_mean: vec![0.0; CTX_DIM],
            target_mean: vec![1.0; CTX_DIM],
            policy_noise: 5.0,
            objective: Objective::Dose { intercept: 50.0, slope: 10.0, a: vec![0.5, 0.3, -0.4, 0.2] },
            bump: Bump { center: vec![0.8], width: 0.15, height: 400.0 },
            maximize: true,
        }
    }

    /// Regimen task over `n_bits` components. `q_scale = 0` removes the
    /// pairwise interactions.
    pub fn regimen(n_bits: usize, q_scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_2e61);
        let w0 = normal_vec(&mut rng, n_bits, 1.0);
        let w = (0..n_bits).map(|_| normal_vec(&mut rng, CTX_DIM, 0.5)).collect();
        let mut q = vec![vec![0.0; n_bits]; n_bits];
        for i in 0..n_bits {
            for j in i + 1..n_bits {
                if rng.random::<f64>() < 0.2 {
                    let v = q_scale * 0.5 * rng.sample::<f64, _>(StandardNormal);
                    q[i][j] = v;
                    q[j][i] = v;
                }
            }
        }
        let center = (0..n_bits).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
        let dims = (0..n_bits).map(|i| Dim::boolean(format!("Component {}", i + 1))).collect();
        Task {
            name: "regimen".into(),
            seed,
            description: format!(
                "Select which of {n_bits} treatment components to include in the patient's regimen. \
                 Each component has a patient-specific benefit and some pairs of components interact; \
                 the score is the total benefit of the chosen combination, higher is better."
            ),
            space: DesignSpace::new(dims).expect("static space"),
            ctx_dim: CTX_DIM,
            source_mean: vec![0.0; CTX_DIM],
            target_mean: vec![1.0; CTX_DIM],
            policy_noise: 1.0,
            objective: Objective::Regimen { w0, w, q },
            bump: Bump { center, width: 1.5, height: 10.0 },
            maximize: true,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    /// Ideal dose `g(z)` of the dose task.
    pub fn ideal_dose(&self, z: &[f64]) -> Option<f64> {
        match &self.objective {
            Objective::Dose { intercept, slope, a } => Some(intercept + slope * dot(a, z)),
            Objective::Regimen { .. } => None,
        }
    }

    /// Context-dependent unary weights `w(z)` of the regimen task.
    pub fn unary_weights(&self, z: &[f64]) -> Option<Vec<f64>> {
        match &self.objective {
            Objective::Regimen { w0, w, .. } => {
                Some(w0.iter().zip(w).map(|(b, row)| b + dot(row, z)).collect())
            }
            Objective::Dose { .. } => None,
        }
    }

    /// Closed-form objective on an encoded design.
    pub fn objective_encoded(&self, u: &[f64], z: &[f64]) -> f64 {
        match &self.objective {
            Objective::Dose { .. } => {
                let x = u[0] * 100.0;
                let g = self.ideal_dose(z).unwrap_or_default();
                -(x - g) * (x - g)
            }
            Objective::Regimen { q, .. } => {
                let w = self.unary_weights(z).unwrap_or_default();
                let mut total = dot(&w, u);
                for (i, row) in q.iter().enumerate() {
                    if u[i] != 0.0 {
                        total += u[i] * dot(row, u);
                    }
                }
                total
            }
        }
    }

    /// Ground-truth objective. Only the evaluation harness should call this.
    pub fn oracle_eval(&self, d: &Design, ctx: &Context) -> Result<f64> {
        self.check_context(ctx)?;
        Ok(self.objective_encoded(&self.space.encode(d)?, &ctx.features))
    }

    pub fn check_context(&self, ctx: &Context) -> Result<()> {
        if ctx.features.len() != self.ctx_dim {
            return Err(LeonError::Schema(format!(
                "context has {} features but task `{}` uses {}",
                ctx.features.len(),
                self.name,
                self.ctx_dim
            )));
        }
        Ok(())
    }

    fn sample_contexts(&self, mean: &[f64], n: usize, prefix: &str, rng: &mut impl Rng) -> Vec<Context> {
        (0..n)
            .map(|i| {
                let f = mean.iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)).collect();
                Context::new(format!("{prefix}{i}"), f)
            })
            .collect()
    }

    pub fn sample_source_contexts(&self, n: usize, rng: &mut impl Rng) -> Vec<Context> {
        self.sample_contexts(&self.source_mean.clone(), n, "src-", rng)
    }

    pub fn sample_target_contexts(&self, n: usize, rng: &mut impl Rng) -> Vec<Context> {
        self.sample_contexts(&self.target_mean.clone(), n, "patient-", rng)
    }

    /// Near-optimal treatment of the historical policy for context `z`.
    pub fn source_policy(&self, z: &[f64], rng: &mut impl Rng) -> Design {
        match &self.objective {
            Objective::Dose { .. } => {
                let noise = Normal::new(0.0, self.policy_noise).expect("positive noise");
                let x = self.ideal_dose(z).unwrap_or_default() + noise.sample(rng);
                Design::reals(&[x.clamp(0.0, 100.0)])
            }
            Objective::Regimen { .. } => {
                let w = self.unary_weights(z).unwrap_or_default();
                let bits: Vec<bool> = w
                    .iter()
                    .map(|wi| wi + self.policy_noise * rng.sample::<f64, _>(StandardNormal) > 0.0)
                    .collect();
                Design::bools(&bits)
            }
        }
    }

    /// `n` historical `(context, design)` pairs from the source population.
    pub fn source_data(&self, n: usize, seed: u64) -> Vec<(Context, Design)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ctxs = self.sample_source_contexts(n, &mut rng);
        ctxs.into_iter()
            .map(|c| {
                let d = self.source_policy(&c.features, &mut rng);
                (c, d)
            })
            .collect()
    }

    /// Rendered patient description used inside prompts.
    pub fn describe_context(&self, ctx: &Context) -> String {
        render_context(&self.name, ctx)
    }

    /// Dense grid of the design space for the dose task; `None` for spaces
    /// without a single continuous dimension.
    pub fn dose_grid(&self, n: usize) -> Option<Vec<Design>> {
        match self.objective {
            Objective::Dose { .. } => {
                Some((0..n).map(|i| Design::reals(&[100.0 * i as f64 / (n - 1) as f64])).collect())
            }
            Objective::Regimen { .. } => None,
        }
    }
}
