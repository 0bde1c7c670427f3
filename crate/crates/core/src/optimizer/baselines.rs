//! Surrogate-only baselines sharing the same evaluation budget.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{select_final, MeteredSurrogate, RunOutput, SelectionPolicy};
use crate::error::Result;
use crate::memory::{MemoryEntry, TrajectoryMemory};
use crate::numerics::stats::population_std;
use crate::proposal::mock::random_design;
use crate::space::{Context, Design, DesignSpace, DimKind, Value};
use crate::tasks::Surrogate;

pub const SA_PROBES: usize = 64;
pub const SA_STEP: f64 = 0.1;
pub const SA_FINAL_RATIO: f64 = 0.01;
pub const GREEDY_RESTARTS: usize = 4;
pub const GREEDY_FD_STEP: f64 = 1e-3;
pub const GREEDY_LR: f64 = 0.05;
/// Sufficient-increase fraction of the backtracking line search.
const ARMIJO: f64 = 0.5;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    RandomSearch,
    SimulatedAnnealing,
    SurrogateGreedy,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::RandomSearch => "random-search",
            BaselineKind::SimulatedAnnealing => "simulated-annealing",
            BaselineKind::SurrogateGreedy => "surrogate-greedy",
        }
    }
}

/// Every surrogate call of a baseline, recorded as a memory entry.
struct Recorder<'a> {
    meter: MeteredSurrogate<'a>,
    memory: TrajectoryMemory,
    step: usize,
}

impl Recorder<'_> {
    /// `None` once the budget is spent.
    fn eval(&mut self, d: &Design) -> Result<Option<f64>> {
        if self.meter.remaining() == 0 {
            return Ok(None);
        }
        let v = self.meter.eval(d)?;
        self.memory.push(MemoryEntry { step: self.step, design: d.clone(), raw_value: v, score: v, class_id: 0 })?;
        Ok(Some(v))
    }
}

pub fn run_baseline(kind: BaselineKind, surrogate: &Surrogate, ctx: &Context, budget: usize, seed: u64) -> Result<RunOutput> {
    let meter = MeteredSurrogate::new(surrogate, ctx, budget)?;
    let mut rec = Recorder { meter, memory: TrajectoryMemory::new(budget), step: 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = surrogate.task().space().clone();
    match kind {
        BaselineKind::RandomSearch => {
            while rec.meter.remaining() > 0 {
                rec.eval(&random_design(&space, &mut rng))?;
            }
        }
        BaselineKind::SimulatedAnnealing => annealing(&space, &mut rec, &mut rng)?,
        BaselineKind::SurrogateGreedy => greedy(&space, &mut rec, &mut rng)?,
    }
    let final_design = select_final(&rec.memory, SelectionPolicy::Score)?.design.clone();
    Ok(RunOutput {
        method: kind.name().into(),
        final_design,
        final_lambda: 0.0,
        surrogate_evals: rec.meter.used(),
        memory: rec.memory,
        warnings: Vec::new(),
        aborted: false,
    })
}

/// Metropolis rule for maximization. At zero temperature only strict
/// improvements pass.
pub fn sa_accept(delta: f64, temp: f64, u: f64) -> bool {
    delta > 0.0 || (temp > 0.0 && u < (delta / temp).exp())
}

/// Changes one coordinate: a Gaussian step of `SA_STEP` ranges for
/// continuous dimensions, a flip or a different label otherwise.
fn single_dim_move(space: &DesignSpace, d: &Design, rng: &mut impl Rng) -> Design {
    let mut values = d.values.clone();
    let i = rng.random_range(0..space.arity());
    values[i] = match (&space.dims()[i].kind, values[i]) {
        (DimKind::Continuous { lo, hi }, Value::Real(x)) => {
            let n = Normal::new(0.0, SA_STEP * (hi - lo)).expect("positive step");
            Value::Real((x + n.sample(rng)).clamp(*lo, *hi))
        }
        (DimKind::Boolean, Value::Bool(b)) => Value::Bool(!b),
        (DimKind::Categorical { labels }, Value::Label(l)) if labels.len() > 1 => {
            Value::Label((l + rng.random_range(1..labels.len())) % labels.len())
        }
        (_, v) => v,
    };
    Design::new(values)
}

fn annealing(space: &DesignSpace, rec: &mut Recorder<'_>, rng: &mut ChaCha8Rng) -> Result<()> {
    let mut probes = Vec::new();
    for _ in 0..SA_PROBES {
        let d = random_design(space, rng);
        match rec.eval(&d)? {
            Some(v) => probes.push((d, v)),
            None => return Ok(()),
        }
    }
    let t0 = population_std(&probes.iter().map(|p| p.1).collect::<Vec<_>>());
    let n_moves = rec.meter.remaining();
    let alpha = if n_moves > 0 { SA_FINAL_RATIO.powf(1.0 / n_moves as f64) } else { 1.0 };
    let (mut cur, mut cur_v) = probes.into_iter().fold((Design::new(vec![]), f64::NEG_INFINITY), |acc, p| {
        if p.1 > acc.1 {
            p
        } else {
            acc
        }
    });
    rec.step = 2;
    let mut temp = t0;
    loop {
        let cand = single_dim_move(space, &cur, rng);
        let Some(v) = rec.eval(&cand)? else { break };
        if sa_accept(v - cur_v, temp, rng.random()) {
            cur = cand;
            cur_v = v;
        }
        temp *= alpha;
    }
    Ok(())
}

fn greedy(space: &DesignSpace, rec: &mut Recorder<'_>, rng: &mut ChaCha8Rng) -> Result<()> {
    let total = rec.meter.remaining();
    let restarts = GREEDY_RESTARTS.min(total).max(1);
    let per = total / restarts;
    let cont: Vec<usize> = (0..space.arity()).filter(|&i| space.dims()[i].is_continuous()).collect();
    for r in 0..restarts {
        rec.step = r + 1;
        let stop_at = rec.meter.used() + per;
        let mut x = random_design(space, rng);
        let Some(mut fx) = rec.eval(&x)? else { return Ok(()) };
        loop {
            let mut moved = false;
            if !cont.is_empty() {
                if let Some((nx, nf)) = gradient_step(space, &cont, rec, &x, fx, stop_at)? {
                    moved = nf > fx;
                    x = nx;
                    fx = nf;
                }
            }
            if cont.len() < space.arity() {
                if let Some((nx, nf)) = flip_step(space, rec, &x, fx, stop_at)? {
                    moved = true;
                    x = nx;
                    fx = nf;
                }
            }
            if !moved || left(rec, stop_at) == 0 {
                break;
            }
        }
    }
    Ok(())
}

fn set_real(space: &DesignSpace, d: &Design, i: usize, u: f64) -> Design {
    let mut values = d.values.clone();
    if let DimKind::Continuous { lo, hi } = space.dims()[i].kind {
        values[i] = Value::Real(lo + u.clamp(0.0, 1.0) * (hi - lo));
    }
    Design::new(values)
}

fn unit(space: &DesignSpace, d: &Design, i: usize) -> f64 {
    match (&space.dims()[i].kind, d.values[i]) {
        (DimKind::Continuous { lo, hi }, Value::Real(x)) => (x - lo) / (hi - lo),
        _ => 0.0,
    }
}

fn left(rec: &Recorder<'_>, stop_at: usize) -> usize {
    stop_at.saturating_sub(rec.meter.used())
}

/// Central-difference gradient ascent step in encoded units with an
/// Armijo backtracking line search. `None` when the budget ran out.
fn gradient_step(
    space: &DesignSpace,
    cont: &[usize],
    rec: &mut Recorder<'_>,
    x: &Design,
    fx: f64,
    stop_at: usize,
) -> Result<Option<(Design, f64)>> {
    if left(rec, stop_at) < 2 * cont.len() + 1 {
        return Ok(None);
    }
    let mut grad = Vec::with_capacity(cont.len());
    for &i in cont {
        let u = unit(space, x, i);
        let (a, b) = ((u - GREEDY_FD_STEP).max(0.0), (u + GREEDY_FD_STEP).min(1.0));
        let fa = rec.eval(&set_real(space, x, i, a))?.expect("budget checked");
        let fb = rec.eval(&set_real(space, x, i, b))?.expect("budget checked");
        grad.push(if b > a { (fb - fa) / (b - a) } else { 0.0 });
    }
    let g2: f64 = grad.iter().map(|g| g * g).sum();
    if g2 == 0.0 {
        return Ok(Some((x.clone(), fx)));
    }
    let mut lr = GREEDY_LR;
    for _ in 0..MAX_HALVINGS {
        if left(rec, stop_at) == 0 {
            return Ok(None);
        }
        let mut cand = x.clone();
        for (k, &i) in cont.iter().enumerate() {
            cand = set_real(space, &cand, i, unit(space, x, i) + lr * grad[k]);
        }
        let fc = rec.eval(&cand)?.expect("budget checked");
        if fc >= fx + ARMIJO * lr * g2 && fc > fx {
            return Ok(Some((cand, fc)));
        }
        lr *= 0.5;
    }
    Ok(Some((x.clone(), fx)))
}

/// Best strictly improving single-coordinate change of the discrete
/// dimensions, or `None` at a local optimum or when the budget ran out.
fn flip_step(space: &DesignSpace, rec: &mut Recorder<'_>, x: &Design, fx: f64, stop_at: usize) -> Result<Option<(Design, f64)>> {
    let mut best: Option<(Design, f64)> = None;
    for (i, dim) in space.dims().iter().enumerate() {
        let alternatives: Vec<Value> = match (&dim.kind, x.values[i]) {
            (DimKind::Boolean, Value::Bool(b)) => vec![Value::Bool(!b)],
            (DimKind::Categorical { labels }, Value::Label(l)) => {
                (0..labels.len()).filter(|&j| j != l).map(Value::Label).collect()
            }
            _ => continue,
        };
        for v in alternatives {
            if left(rec, stop_at) == 0 {
                return Ok(best.filter(|b| b.1 > fx));
            }
            let mut values = x.values.clone();
            values[i] = v;
            let cand = Design::new(values);
            let fc = rec.eval(&cand)?.expect("budget checked");
            if best.as_ref().is_none_or(|b| fc > b.1) {
                best = Some((cand, fc));
            }
        }
    }
    Ok(best.filter(|b| b.1 > fx))
}
