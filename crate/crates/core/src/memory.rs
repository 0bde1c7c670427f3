//! Hyperparameters and the append-only trajectory memory of a run.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::space::Design;

/// Outer-loop hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub lambda0: f64,
    pub w0: f64,
    pub eta_lambda: f64,
    pub eta_critic: f64,
    pub temperature: f64,
    pub batch_size: usize,
    pub budget: usize,
    pub mu_max: f64,
    pub rng_seed: u64,
    /// Use a constant `eta_lambda` instead of the `eta_lambda / sqrt(t)` decay.
    pub constant_eta_lambda: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lambda0: 0.0,
            w0: 1.0,
            eta_lambda: 0.1,
            eta_critic: 0.001,
            temperature: 1.0,
            batch_size: 32,
            budget: 2048,
            mu_max: 100.0,
            rng_seed: 0,
            constant_eta_lambda: false,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("lambda0", self.lambda0),
            ("w0", self.w0),
            ("eta_lambda", self.eta_lambda),
            ("temperature", self.temperature),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.eta_critic.is_finite() && self.eta_critic > 0.0) {
            return Err(invalid("eta_critic must be > 0"));
        }
        if !(self.mu_max.is_finite() && self.mu_max > 0.0) {
            return Err(invalid("mu_max must be > 0"));
        }
        if self.batch_size < 2 {
            return Err(invalid("batch_size must be > 1"));
        }
        if self.budget < self.batch_size {
            return Err(invalid(format!(
                "budget {} is smaller than batch_size {}",
                self.budget, self.batch_size
            )));
        }
        Ok(())
    }

    /// Number of acquisition steps, `ceil(B / b)`.
    pub fn n_steps(&self) -> usize {
        self.budget.div_ceil(self.batch_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub step: usize,
    pub design: Design,
    pub raw_value: f64,
    pub score: f64,
    pub class_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub lambda: f64,
    pub mu_hat: f64,
    pub w1_estimate: f64,
    pub reflection: String,
}

/// Append-only log of every scored proposal plus per-step traces.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryMemory {
    entries: Vec<MemoryEntry>,
    traces: Vec<StepTrace>,
    capacity: usize,
}

impl TrajectoryMemory {
    pub fn new(capacity: usize) -> Self {
        TrajectoryMemory { entries: Vec::new(), traces: Vec::new(), capacity }
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn traces(&self) -> &[StepTrace] {
        &self.traces
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Last `m` entries, oldest first.
    pub fn tail(&self, m: usize) -> &[MemoryEntry] {
        &self.entries[self.entries.len().saturating_sub(m)..]
    }

    pub fn push(&mut self, entry: MemoryEntry) -> Result<()> {
        if self.entries.len() >= self.capacity {
            return Err(invalid(format!("memory is full ({} entries)", self.capacity)));
        }
        if let Some(last) = self.entries.last() {
            if entry.step < last.step {
                return Err(invalid(format!("step {} precedes step {}", entry.step, last.step)));
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn push_trace(&mut self, trace: StepTrace) {
        self.traces.push(trace);
    }

    /// Attaches a reflection to the most recent step trace.
    pub fn set_last_reflection(&mut self, text: String) {
        if let Some(t) = self.traces.last_mut() {
            t.reflection = text;
        }
    }

    pub fn last_reflection(&self) -> &str {
        self.traces.last().map(|t| t.reflection.as_str()).unwrap_or("")
    }
}
