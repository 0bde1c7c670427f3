//! Certainty parameters: per-class optima, Boltzmann class weights, the `mu`
//! regression, the dual gradient in `lambda`, and score scaling.

use serde::{Deserialize, Serialize};

use crate::equivalence::occupancies;
use crate::error::{invalid, Result};
use crate::numerics::stats::{log_sum_exp, regression_slope, softmax};

/// The best member of one observed class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStat {
    pub class_id: usize,
    pub q_hat: f64,
    /// Index of the class optimum within the batch.
    pub best_index: usize,
    pub best_surrogate: f64,
    pub best_critic: f64,
    /// `f_hat(x*) + lambda c(x*)`.
    pub best_value: f64,
}

/// Observed classes in ascending id order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassStats {
    pub classes: Vec<ClassStat>,
}

impl ClassStats {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.best_value).collect()
    }

    pub fn critics(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.best_critic).collect()
    }

    pub fn q_hat(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.q_hat).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertaintyState {
    pub lambda: f64,
    pub mu_hat: f64,
    /// Acquisition step, starting at 1.
    pub t: usize,
}

impl CertaintyState {
    pub fn new(lambda0: f64) -> Self {
        CertaintyState { lambda: lambda0.max(0.0), mu_hat: 1.0, t: 1 }
    }
}

/// Per-class argmax of `f_hat + lambda c` (first occurrence on ties) and the
/// class occupancies of the batch.
pub fn class_optima(surrogate: &[f64], critic: &[f64], assignments: &[usize], lambda: f64) -> Result<ClassStats> {
    if surrogate.is_empty() {
        return Err(invalid("empty batch"));
    }
    if surrogate.len() != critic.len() || surrogate.len() != assignments.len() {
        return Err(invalid("batch values and assignments are misaligned"));
    }
    let n_classes = assignments.iter().max().map_or(0, |m| m + 1);
    let q = occupancies(assignments, n_classes)?;
    let mut best: Vec<Option<usize>> = vec![None; n_classes];
    let value = |i: usize| surrogate[i] + lambda * critic[i];
    for (i, a) in assignments.iter().enumerate() {
        match best[*a] {
            Some(j) if value(j) >= value(i) => {}
            _ => best[*a] = Some(i),
        }
    }
    let classes = best
        .into_iter()
        .enumerate()
        .filter_map(|(id, b)| {
            b.map(|i| ClassStat {
                class_id: id,
                q_hat: q[id],
                best_index: i,
                best_surrogate: surrogate[i],
                best_critic: critic[i],
                best_value: value(i),
            })
        })
        .collect();
    Ok(ClassStats { classes })
}

/// `softmax(mu * s_i)` over observed classes.
pub fn boltzmann_weights(stats: &ClassStats, mu: f64) -> Vec<f64> {
    let logits: Vec<f64> = stats.classes.iter().map(|c| mu * c.best_value).collect();
    softmax(&logits)
}

/// Slope of `ln q_hat` on `s*`, clamped to `[0, mu_max]`. Falls back to
/// `prev_mu` with fewer than two observed classes or constant `s*`.
pub fn estimate_mu(stats: &ClassStats, prev_mu: f64, mu_max: f64) -> f64 {
    if stats.len() < 2 {
        return prev_mu;
    }
    let s = stats.values();
    let log_q: Vec<f64> = stats.classes.iter().map(|c| c.q_hat.ln()).collect();
    match regression_slope(&s, &log_q) {
        Ok(Some(slope)) if slope.is_finite() => slope.clamp(0.0, mu_max),
        _ => prev_mu,
    }
}

/// `dg/dlambda = W0 - E_src[c] + sum_i qbar_i c(x_i*)`.
pub fn dual_gradient(w0: f64, src_mean_c: f64, stats: &ClassStats, qbar: &[f64]) -> Result<f64> {
    if qbar.len() != stats.len() {
        return Err(invalid("class weights and class stats are misaligned"));
    }
    let expected: f64 = qbar.iter().zip(&stats.classes).map(|(q, c)| q * c.best_critic).sum();
    Ok(w0 - src_mean_c + expected)
}

/// Dual function `g(lambda, mu) = lambda (W0 - E_src c) + (H0 + ln Z) / mu`,
/// with `Z = sum_i exp(mu (f_i + lambda c_i))` over class optima.
pub fn dual_value(lambda: f64, mu: f64, h0: f64, w0: f64, src_mean_c: f64, f_star: &[f64], c_star: &[f64]) -> f64 {
    let logits: Vec<f64> = f_star.iter().zip(c_star).map(|(f, c)| mu * (f + lambda * c)).collect();
    lambda * (w0 - src_mean_c) + (h0 + log_sum_exp(&logits)) / mu
}

/// Projected step `lambda <- max(0, lambda - eta_t grad)` with
/// `eta_t = eta / sqrt(t)`, or `eta` when `constant_eta` is set. The caller
/// advances `t`.
pub fn update_lambda(state: CertaintyState, grad: f64, eta: f64, constant_eta: bool) -> CertaintyState {
    let step = if constant_eta { eta } else { eta / (state.t.max(1) as f64).sqrt() };
    CertaintyState { lambda: (state.lambda - step * grad).max(0.0), ..state }
}

pub fn score_designs(raw_values: &[f64], mu_hat: f64) -> Vec<f64> {
    raw_values.iter().map(|r| mu_hat * r).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stats_from(values: &[f64], q: &[f64]) -> ClassStats {
        ClassStats {
            classes: values
                .iter()
                .zip(q)
                .enumerate()
                .map(|(i, (v, q))| ClassStat {
                    class_id: i,
                    q_hat: *q,
                    best_index: i,
                    best_surrogate: *v,
                    best_critic: 0.0,
                    best_value: *v,
                })
                .collect(),
        }
    }

    #[test]
    fn class_optima_examples() {
        let s = class_optima(&[1.0, 3.0], &[0.0, 0.0], &[0, 0], 0.0).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!((s.classes[0].best_value, s.classes[0].q_hat), (3.0, 1.0));

        let s = class_optima(&[1.0, 0.0], &[0.0, 1.0], &[0, 0], 2.0).unwrap();
        assert_eq!((s.classes[0].best_index, s.classes[0].best_value), (1, 2.0));

        let s = class_optima(&[5.0, 1.0, 5.0, 2.0], &[9.0, 0.0, 0.0, 0.0], &[2, 0, 2, 0], 0.0).unwrap();
        let ids: Vec<_> = s.classes.iter().map(|c| (c.class_id, c.best_index, c.q_hat)).collect();
        assert_eq!(ids, vec![(0, 3, 0.5), (2, 0, 0.5)]);

        assert!(class_optima(&[1.0], &[0.0, 1.0], &[0], 0.0).is_err());
    }

    #[test]
    fn boltzmann_examples() {
        let s = stats_from(&[1.0, 0.0], &[0.5, 0.5]);
        let w = boltzmann_weights(&s, 3f64.ln());
        assert!((w[0] - 0.75).abs() < 1e-12 && (w[1] - 0.25).abs() < 1e-12);
        assert_eq!(boltzmann_weights(&s, 0.0), vec![0.5, 0.5]);
    }

    #[test]
    fn mu_examples() {
        for mu in [0.5, 2.0, 5.0] {
            let s = [0.3, -0.2, 1.1, 0.4];
            let logits: Vec<f64> = s.iter().map(|x| mu * x).collect();
            let q = softmax(&logits);
            let est = estimate_mu(&stats_from(&s, &q), 1.0, 100.0);
            assert!((est - mu).abs() < 1e-9, "{est} vs {mu}");
        }
        assert_eq!(estimate_mu(&stats_from(&[1.0, 2.0, 3.0], &[1.0 / 3.0; 3]), 7.0, 100.0), 0.0);
        assert_eq!(estimate_mu(&stats_from(&[1.0], &[1.0]), 7.0, 100.0), 7.0);
        assert_eq!(estimate_mu(&stats_from(&[1.0, 1.0], &[0.2, 0.8]), 7.0, 100.0), 7.0);
        // negative slope clamps to zero, huge slope to mu_max
        assert_eq!(estimate_mu(&stats_from(&[1.0, 0.0], &[0.2, 0.8]), 7.0, 100.0), 0.0);
        assert_eq!(estimate_mu(&stats_from(&[0.001, 0.0], &[0.9, 0.1]), 7.0, 100.0), 100.0);
    }

    #[test]
    fn dual_gradient_examples() {
        let mut s = stats_from(&[0.0, 0.0], &[0.5, 0.5]);
        s.classes[0].best_critic = -0.2;
        s.classes[1].best_critic = -0.2;
        assert!((dual_gradient(1.0, 0.3, &s, &[0.5, 0.5]).unwrap() - 0.5).abs() < 1e-12);
        assert!(dual_gradient(0.5, 0.3, &s, &[0.5, 0.5]).unwrap().abs() < 1e-12);
        let z = stats_from(&[1.0, 2.0], &[0.5, 0.5]);
        assert_eq!(dual_gradient(1.0, 0.0, &z, &[0.3, 0.7]).unwrap(), 1.0);
        assert!(dual_gradient(1.0, 0.0, &z, &[1.0]).is_err());
    }

    #[test]
    fn lambda_examples() {
        let st = CertaintyState { lambda: 0.5, mu_hat: 1.0, t: 1 };
        assert!((update_lambda(st, 0.5, 0.1, false).lambda - 0.45).abs() < 1e-12);
        assert_eq!(update_lambda(st, 0.0, 0.1, false).lambda, 0.5);
        let zero = CertaintyState { lambda: 0.0, ..st };
        assert_eq!(update_lambda(zero, 1.0, 0.1, false).lambda, 0.0);
        let later = CertaintyState { t: 4, ..st };
        assert!((update_lambda(later, -1.0, 0.1, false).lambda - 0.55).abs() < 1e-12);
        assert!((update_lambda(later, -1.0, 0.1, true).lambda - 0.6).abs() < 1e-12);
    }

    #[test]
    fn score_examples() {
        assert_eq!(score_designs(&[1.0, -3.0], 0.0), vec![0.0, -0.0]);
        assert_eq!(score_designs(&[1.0, -3.0], 1.0), vec![1.0, -3.0]);
        assert_eq!(score_designs(&[-1.0, 0.5], 2.0), vec![-2.0, 1.0]);
    }

    proptest! {
        #[test]
        fn boltzmann_is_a_shift_invariant_distribution(
            s in proptest::collection::vec(-20.0f64..20.0, 1..8),
            mu in 0.0f64..10.0,
            shift in -50.0f64..50.0,
        ) {
            let q = vec![1.0 / s.len() as f64; s.len()];
            let a = boltzmann_weights(&stats_from(&s, &q), mu);
            let shifted: Vec<f64> = s.iter().map(|x| x + shift).collect();
            let b = boltzmann_weights(&stats_from(&shifted, &q), mu);
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(*x >= 0.0);
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn lambda_stays_non_negative(l in 0.0f64..5.0, g in -10.0f64..10.0, eta in 0.0f64..2.0, t in 1usize..100) {
            let st = CertaintyState { lambda: l, mu_hat: 1.0, t };
            prop_assert!(update_lambda(st, g, eta, false).lambda >= 0.0);
        }
    }
}
