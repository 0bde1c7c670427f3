//! Brute-force property checks behind `leon verify`: design collapse, the
//! Boltzmann closed form, the dual gradient, `mu` recovery, the critic
//! contract, the shift bound, backprop, and `lambda` dynamics.
//!
//! Every check uses fixed seeds and computes its reference values here,
//! independently of the code under test.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::certainty::{boltzmann_weights, class_optima, dual_gradient, dual_value, estimate_mu, ClassStat, ClassStats};
use crate::critic::{CriticConfig, CriticModel, SourcePool};
use crate::equivalence::Partition;
use crate::error::Result;
use crate::memory::{Hyperparams, MemoryEntry};
use crate::numerics::DenseNet;
use crate::optimizer::{run_leon_with, LeonConfig, LeonSetup, RunConfig};
use crate::proposal::{PromptState, Proposer};
use crate::space::{Context, Design, DesignSpace};
use crate::tasks::bound::shift_bound_check;
use crate::tasks::{Surrogate, SurrogateSpec, Task};

/// Class weights from class values `s` and `mu`; swappable so a perturbed
/// formula can be shown to fail the closed-form check.
pub type WeightsFn = fn(&[f64], f64) -> Vec<f64>;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    CheckResult { name, passed, detail, elapsed: start.elapsed() }
}

fn stats_of(values: &[f64], critics: &[f64], q_hat: &[f64]) -> ClassStats {
    ClassStats {
        classes: (0..values.len())
            .map(|i| ClassStat {
                class_id: i,
                q_hat: q_hat[i],
                best_index: i,
                best_surrogate: values[i] - critics[i],
                best_critic: critics[i],
                best_value: values[i],
            })
            .collect(),
    }
}

/// Boltzmann weights through the library implementation.
pub fn library_weights(s: &[f64], mu: f64) -> Vec<f64> {
    let zeros = vec![0.0; s.len()];
    boltzmann_weights(&stats_of(s, &zeros, &zeros), mu)
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// All vectors of `parts` non-negative integers summing to `total`.
fn compositions(total: usize, parts: usize, out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>) {
    if cur.len() + 1 == parts {
        cur.push(total - cur.iter().sum::<usize>());
        out.push(cur.clone());
        cur.pop();
        return;
    }
    let left = total - cur.iter().sum::<usize>();
    for v in 0..=left {
        cur.push(v);
        compositions(total, parts, out, cur);
        cur.pop();
    }
}

/// Six designs in two classes: collapsing each feasible grid distribution
/// onto the class optima keeps the class entropy and never lowers the
/// partial Lagrangian.
pub fn check_design_collapse(instances: usize, seed: u64) -> CheckResult {
    timed("design collapse", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut grid = Vec::new();
        compositions(20, 6, &mut grid, &mut Vec::new());
        let mut worst = f64::INFINITY;
        let mut feasible = 0usize;
        let mut entropy_gap: f64 = 0.0;
        for _ in 0..instances {
            let mut classes: Vec<usize> = (0..6).map(|_| rng.random_range(0..2)).collect();
            classes[0] = 0;
            classes[1] = 1;
            let f: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w0: f64 = rng.random_range(0.0..1.0);
            let src_c: f64 = rng.random_range(-1.0..1.0);
            let h0: f64 = rng.random_range(0.0..2f64.ln());
            for lambda in [0.0, 0.5, 2.0] {
                let stats = class_optima(&f, &c, &classes, lambda)?;
                let lagrangian =
                    |q: &[f64]| (0..6).map(|i| q[i] * f[i]).sum::<f64>() + lambda * (w0 - src_c + (0..6).map(|i| q[i] * c[i]).sum::<f64>());
                for g in &grid {
                    let q: Vec<f64> = g.iter().map(|k| *k as f64 / 20.0).collect();
                    let mut mass = [0.0; 2];
                    for i in 0..6 {
                        mass[classes[i]] += q[i];
                    }
                    if entropy(&mass) > h0 {
                        continue;
                    }
                    feasible += 1;
                    let mut q_star = vec![0.0; 6];
                    for cls in &stats.classes {
                        q_star[cls.best_index] += mass[cls.class_id];
                    }
                    let mut mass_star = [0.0; 2];
                    for i in 0..6 {
                        mass_star[classes[i]] += q_star[i];
                    }
                    entropy_gap = entropy_gap.max((entropy(&mass_star) - entropy(&mass)).abs());
                    worst = worst.min(lagrangian(&q_star) - lagrangian(&q));
                }
            }
        }
        let ok = worst >= -1e-9 && entropy_gap <= 1e-12 && feasible > 0;
        Ok((ok, format!("{feasible} feasible distributions, min margin {worst:.3e}, max entropy change {entropy_gap:.1e}")))
    })
}

/// Three classes: the grid maximiser of `sum q s + H(q) / mu` on a 1e-3
/// simplex lattice matches `weights(s, mu)` within 5e-3 in the max norm.
pub fn check_boltzmann_closed_form(weights: WeightsFn, instances: usize, seed: u64) -> CheckResult {
    timed("boltzmann closed form", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 1000usize;
        let xlogx = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
        let table: Vec<f64> = (0..=n).map(|i| xlogx(i as f64 / n as f64)).collect();
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            let s: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mu: f64 = rng.random_range(0.5..3.0);
            let mut best = (f64::NEG_INFINITY, [0usize; 3]);
            for i in 0..=n {
                for j in 0..=n - i {
                    let k = n - i - j;
                    let lin = (i as f64 * s[0] + j as f64 * s[1] + k as f64 * s[2]) / n as f64;
                    let v = lin - (table[i] + table[j] + table[k]) / mu;
                    if v > best.0 {
                        best = (v, [i, j, k]);
                    }
                }
            }
            let q = weights(&s, mu);
            let err = (0..3).map(|a| (q[a] - best.1[a] as f64 / n as f64).abs()).fold(0.0, f64::max);
            worst = worst.max(err);
        }
        Ok((worst <= 5e-3, format!("max |q - grid argmax| = {worst:.2e} over {instances} instances")))
    })
}

/// Analytic `dg/dlambda` against a central difference of the dual function.
pub fn check_dual_gradient(instances: usize, seed: u64) -> CheckResult {
    timed("dual gradient", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            let n = rng.random_range(2..=8);
            let f: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lambda: f64 = rng.random_range(0.0..2.0);
            let mu: f64 = rng.random_range(0.2..3.0);
            let w0: f64 = rng.random_range(0.0..1.0);
            let src_c: f64 = rng.random_range(-1.0..1.0);
            let values: Vec<f64> = f.iter().zip(&c).map(|(f, c)| f + lambda * c).collect();
            let stats = stats_of(&values, &c, &vec![1.0 / n as f64; n]);
            let analytic = dual_gradient(w0, src_c, &stats, &boltzmann_weights(&stats, mu))?;
            let g = |l: f64| dual_value(l, mu, 1.0, w0, src_c, &f, &c);
            let fd = (g(lambda + h) - g(lambda - h)) / (2.0 * h);
            worst = worst.max((analytic - fd).abs() / fd.abs().max(1.0));
        }
        Ok((worst <= 1e-5, format!("max relative error {worst:.2e}")))
    })
}

/// `mu` from exact Boltzmann occupancies, and from multinomial samples.
pub fn check_mu_recovery(seed: u64) -> CheckResult {
    timed("mu recovery", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut exact_err: f64 = 0.0;
        let mut noisy_err: f64 = 0.0;
        for mu in [0.5, 2.0, 5.0] {
            let s: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let z: f64 = s.iter().map(|v| (mu * v).exp()).sum();
            let q: Vec<f64> = s.iter().map(|v| (mu * v).exp() / z).collect();
            let est = estimate_mu(&stats_of(&s, &[0.0; 5], &q), 1.0, 100.0);
            exact_err = exact_err.max((est - mu).abs());

            let s: Vec<f64> = (0..4).map(|i| 2.0 / mu * i as f64 / 3.0).collect();
            let z: f64 = s.iter().map(|v| (mu * v).exp()).sum();
            let p: Vec<f64> = s.iter().map(|v| (mu * v).exp() / z).collect();
            let n = 10_000;
            let mut counts = [0usize; 4];
            for _ in 0..n {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = 3;
                for (i, pi) in p.iter().enumerate() {
                    acc += pi;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                counts[k] += 1;
            }
            let q: Vec<f64> = counts.iter().map(|c| *c as f64 / n as f64).collect();
            let est = estimate_mu(&stats_of(&s, &[0.0; 4], &q), 1.0, 100.0);
            noisy_err = noisy_err.max((est - mu).abs() / mu);
        }
        Ok((
            exact_err <= 1e-9 && noisy_err <= 0.1,
            format!("exact max error {exact_err:.1e}, sampled max relative error {noisy_err:.3}"),
        ))
    })
}

fn sorted_w1(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Clipped parameters after training, a near-zero estimate on identical
/// sets, and a positive estimate below the exact distance on separated sets.
pub fn check_critic_contract(seed: u64) -> CheckResult {
    timed("critic contract", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = CriticConfig::default();
        let lr = Hyperparams::default().eta_critic;

        let src: Vec<Vec<f64>> = (0..200).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let gen: Vec<Vec<f64>> = (0..64).map(|_| (0..3).map(|_| 0.5 + rng.random::<f64>()).collect()).collect();
        let mut critic = CriticModel::new(3, &cfg, &mut rng);
        critic.train(&SourcePool::from_encoded(src.clone())?, &gen, lr, &cfg, seed)?;
        let max_param = critic.net.max_abs_param();

        let mut same = CriticModel::new(3, &cfg, &mut rng);
        let same_est = same.train(&SourcePool::from_encoded(src.clone())?, &src, lr, &cfg, seed)?.w1_estimate;

        let a: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..0.2)).collect();
        let b: Vec<f64> = (0..200).map(|_| rng.random_range(0.8..1.0)).collect();
        let exact = sorted_w1(&a, &b);
        let wrap = |xs: &[f64]| xs.iter().map(|x| vec![*x]).collect::<Vec<_>>();
        let mut sep = CriticModel::new(1, &cfg, &mut rng);
        let sep_est = sep.train(&SourcePool::from_encoded(wrap(&a))?, &wrap(&b), lr, &cfg, seed)?.w1_estimate;

        let ok = max_param <= cfg.clip && same_est.abs() <= 0.05 && sep_est > 0.0 && sep_est <= exact + 0.05;
        Ok((
            ok,
            format!("max|theta| {max_param:.4}, identical-set estimate {same_est:.2e}, separated estimate {sep_est:.2e} vs exact {exact:.4}"),
        ))
    })
}

/// The shift bound on random one-dimensional instances.
pub fn check_shift_bound(instances: usize, seed: u64) -> CheckResult {
    timed("shift bound", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut failures = 0;
        let mut w1_err: f64 = 0.0;
        let mut min_slack = f64::INFINITY;
        for _ in 0..instances {
            let (a1, b1, c1): (f64, f64, f64) = (rng.random_range(0.1..2.0), rng.random_range(0.5..3.0), rng.random_range(-1.0..1.0));
            let (a2, b2, phase): (f64, f64, f64) = (rng.random_range(0.0..0.5), rng.random_range(0.5..4.0), rng.random_range(0.0..6.3));
            let f = move |x: f64| a1 * (b1 * x).sin() + c1 * x;
            let f_hat = move |x: f64| f(x) + a2 * (b2 * x + phase).sin();
            let shift: f64 = rng.random_range(0.0..2.0);
            let n = 40;
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let train: Vec<(f64, f64)> = xs.iter().map(|x| (*x, f(*x) + rng.random_range(-0.05..0.05))).collect();
            let test: Vec<f64> = (0..n).map(|_| shift + rng.random_range(-1.0..1.0)).collect();
            let check = shift_bound_check(&f, &f_hat, &train, &test, None)?;
            w1_err = w1_err.max((check.w1 - sorted_w1(&xs, &test)).abs());
            min_slack = min_slack.min(check.rhs - check.lhs);
            if !check.holds() {
                failures += 1;
            }
        }
        Ok((
            failures == 0 && w1_err <= 1e-12,
            format!("{failures} violations, min slack {min_slack:.3e}, W1 cross-check error {w1_err:.1e}"),
        ))
    })
}

/// Backprop of the squared-error loss against central differences.
pub fn check_net_gradient(instances: usize, seed: u64) -> CheckResult {
    timed("net gradient", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            let inputs = rng.random_range(1..=4);
            let hidden: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(2..=6)).collect();
            // nonzero biases keep pre-activations off the rectifier kink
            let mut net = DenseNet::random(inputs, &hidden, 1.0, &mut rng);
            let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..inputs).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let ys: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, grad) = net.mse_gradient(&xs, &ys)?;
            let analytic = grad.to_param_order();
            for (i, g) in analytic.iter().enumerate() {
                let theta = *net.param_mut(i);
                let h = (1e-5 * theta.abs()).max(1e-7);
                *net.param_mut(i) = theta + h;
                let up = net.mse_gradient(&xs, &ys)?.0;
                *net.param_mut(i) = theta - h;
                let down = net.mse_gradient(&xs, &ys)?.0;
                *net.param_mut(i) = theta;
                let fd = (up - down) / (2.0 * h);
                worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-7));
            }
        }
        Ok((worst <= 1e-4, format!("max relative error {worst:.2e}")))
    })
}

/// Proposes uniform doses from a fixed encoded interval.
struct Forced {
    lo: f64,
    hi: f64,
    rng: ChaCha8Rng,
}

impl Proposer for Forced {
    fn propose(&mut self, state: &PromptState<'_>, b: usize, _: &mut Vec<String>) -> Result<Vec<Design>> {
        (0..b).map(|_| state.space.decode(&[self.rng.random_range(self.lo..=self.hi)])).collect()
    }

    fn reflect(&mut self, _: &DesignSpace, _: &[MemoryEntry], _: &str, _: &mut Vec<String>) -> String {
        String::new()
    }
}

/// The first ten `lambda` values of a dose run whose proposals are forced
/// into the encoded interval `[lo, hi]`; the source pool covers `[0, 0.2]`.
pub fn forced_lambda_trace(lo: f64, hi: f64, lambda0: f64, seed: u64) -> Result<Vec<f64>> {
    let task = Task::dose();
    let surrogate = Surrogate::new(&task, &SurrogateSpec::default(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let designs = (0..256).map(|_| task.space().decode(&[rng.random_range(0.0..=0.2)])).collect::<Result<Vec<_>>>()?;
    let setup = LeonSetup { source: SourcePool::new(task.space(), designs)?, partition: Partition::random(10, seed)? };
    let hyper = Hyperparams { lambda0, w0: 1e-4, budget: 320, batch_size: 32, ..Hyperparams::default() };
    let leon = LeonConfig { critic: CriticConfig { lr: Some(0.05), ..CriticConfig::default() }, ..LeonConfig::default() };
    let cfg = RunConfig { hyper, leon };
    let ctx = Context::new("forced", vec![1.0; task.ctx_dim]);
    let mut engine = Forced { lo, hi, rng: ChaCha8Rng::seed_from_u64(seed ^ 1) };
    let out = run_leon_with(&setup, &surrogate, &ctx, &cfg, seed, &mut engine)?;
    Ok(out.memory.traces().iter().map(|t| t.lambda).collect())
}

/// Out-of-distribution proposals raise `lambda` from 0; in-distribution
/// proposals lower it from 0.5. Both traces must also move.
pub fn check_lambda_dynamics(seed: u64) -> CheckResult {
    timed("lambda dynamics", || {
        let ood = forced_lambda_trace(0.8, 1.0, 0.0, seed)?;
        let ind = forced_lambda_trace(0.0, 0.2, 0.5, seed)?;
        let up = ood.windows(2).all(|w| w[1] >= w[0]) && ood.last() > ood.first();
        let down = ind.windows(2).all(|w| w[1] <= w[0]) && ind.last() < ind.first();
        Ok((
            up && down && ood.len() == 10 && ind.len() == 10,
            format!(
                "out-of-distribution {:.4} -> {:.4}, in-distribution {:.4} -> {:.4}",
                ood.first().unwrap_or(&f64::NAN),
                ood.last().unwrap_or(&f64::NAN),
                ind.first().unwrap_or(&f64::NAN),
                ind.last().unwrap_or(&f64::NAN)
            ),
        ))
    })
}

pub fn run_all() -> Vec<CheckResult> {
    run_all_with(library_weights)
}

pub fn run_all_with(weights: WeightsFn) -> Vec<CheckResult> {
    vec![
        check_design_collapse(50, 1),
        check_boltzmann_closed_form(weights, 20, 2),
        check_dual_gradient(100, 3),
        check_mu_recovery(4),
        check_critic_contract(5),
        check_shift_bound(200, 6),
        check_net_gradient(20, 7),
        check_lambda_dynamics(8),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn skewed(s: &[f64], mu: f64) -> Vec<f64> {
        let mut q = library_weights(s, mu);
        q[0] += 0.1;
        let total: f64 = q.iter().sum();
        q.iter().map(|v| v / total).collect()
    }

    #[test]
    fn compositions_count() {
        let mut out = Vec::new();
        compositions(4, 3, &mut out, &mut Vec::new());
        assert_eq!(out.len(), 15);
        assert!(out.iter().all(|c| c.iter().sum::<usize>() == 4));
    }

    #[test]
    fn perturbed_weights_fail_closed_form() {
        assert!(check_boltzmann_closed_form(library_weights, 2, 9).passed);
        assert!(!check_boltzmann_closed_form(skewed, 2, 9).passed);
    }

    #[test]
    fn sorted_w1_example() {
        assert!((sorted_w1(&[0.0, 1.0], &[2.0, 1.0]) - 1.0).abs() < 1e-15);
    }
}
