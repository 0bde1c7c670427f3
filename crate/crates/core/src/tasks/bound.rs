//! Shift bound on the surrogate test risk for one-dimensional inputs:
//! `E_T |f - f_hat| <= eps + (K + K_hat) * W1(D, T)`.

use crate::error::{invalid, Result};
use crate::numerics::stats::wasserstein_1d;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub eps: f64,
    pub w1: f64,
    pub k: f64,
    pub k_hat: f64,
}

impl BoundCheck {
    /// `lhs <= rhs` up to floating-point slack.
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + 1e-9 * (1.0 + self.rhs.abs())
    }
}

/// Largest difference quotient of `g` between consecutive points of a
/// `grid`-point lattice over `[lo, hi]` merged with `extra`.
///
/// On a finite set of reals every chord quotient is a weighted average of
/// consecutive ones, so this is the exact Lipschitz constant of `g`
/// restricted to the evaluated points.
pub fn grid_lipschitz(g: &dyn Fn(f64) -> f64, lo: f64, hi: f64, grid: usize, extra: &[f64]) -> f64 {
    let mut xs: Vec<f64> = (0..grid.max(2))
        .map(|i| lo + (hi - lo) * i as f64 / (grid.max(2) - 1) as f64)
        .chain(extra.iter().copied())
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let vals: Vec<f64> = xs.iter().map(|x| g(*x)).collect();
    xs.windows(2)
        .zip(vals.windows(2))
        .map(|(x, v)| (v[1] - v[0]).abs() / (x[1] - x[0]))
        .fold(0.0, f64::max)
}

/// Evaluates both sides of the bound. `train` holds labeled pairs `(x, y)`;
/// `eps` is the mean train residual `|y - f_hat(x)|`. When `lipschitz` is
/// `None` the constants are computed on a dense grid over the hull of the
/// inputs.
pub fn shift_bound_check(
    f: &dyn Fn(f64) -> f64,
    f_hat: &dyn Fn(f64) -> f64,
    train: &[(f64, f64)],
    test: &[f64],
    lipschitz: Option<(f64, f64)>,
) -> Result<BoundCheck> {
    if train.is_empty() || test.is_empty() {
        return Err(invalid("train and test sets must be non-empty"));
    }
    let d_inputs: Vec<f64> = train.iter().map(|p| p.0).collect();
    let (k, k_hat) = match lipschitz {
        Some(pair) => pair,
        None => {
            let all: Vec<f64> = d_inputs.iter().chain(test).copied().collect();
            let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (grid_lipschitz(f, lo, hi, 2001, &all), grid_lipschitz(f_hat, lo, hi, 2001, &all))
        }
    };
    let eps = train.iter().map(|(x, y)| (y - f_hat(*x)).abs()).sum::<f64>() / train.len() as f64;
    let lhs = test.iter().map(|x| (f(*x) - f_hat(*x)).abs()).sum::<f64>() / test.len() as f64;
    let w1 = wasserstein_1d(&d_inputs, test)?;
    Ok(BoundCheck { lhs, rhs: eps + (k + k_hat) * w1, eps, w1, k, k_hat })
}
