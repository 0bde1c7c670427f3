//! Experiment configuration files.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use leon_core::optimizer::{Cohort, MethodSpec, RunConfig};
use leon_core::tasks::{make_task, Surrogate, SurrogateSpec, Task};
use leon_core::Hyperparams;

/// One experiment: a task, the methods to compare on it and the cohort
/// drawn from its target population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: String,
    /// Seed for randomly drawn task constants.
    #[serde(default)]
    pub task_seed: u64,
    pub methods: Vec<MethodSpec>,
    pub n_patients: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub hyper: Hyperparams,
    #[serde(default)]
    pub surrogate: SurrogateSpec,
    #[serde(default)]
    pub surrogate_seed: u64,
    /// Seed of the target-patient draw.
    #[serde(default)]
    pub context_seed: u64,
    /// Output directory for results.json and summary.csv.
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Mixture weights for `ablate-shift`; the command line overrides them.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output() -> PathBuf {
    PathBuf::from("leon-out")
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        make_task(&self.task, self.task_seed).map_err(|e| e.to_string())?;
        if self.methods.is_empty() {
            return Err("at least one method is required".into());
        }
        if self.n_patients == 0 {
            return Err("n_patients must be >= 1".into());
        }
        if self.seeds.is_empty() {
            return Err("at least one seed is required".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err("seeds must be distinct".into());
        }
        let mut names = BTreeSet::new();
        for m in &self.methods {
            if !names.insert(m.name()) {
                return Err(format!("duplicate method name `{}`; give LEON variants distinct labels", m.name()));
            }
            if let MethodSpec::Leon(leon) = m {
                RunConfig { hyper: self.hyper.clone(), leon: leon.clone() }.validate().map_err(|e| e.to_string())?;
            }
        }
        self.hyper.validate().map_err(|e| e.to_string())?;
        if let Some(w) = &self.weights {
            check_weights(w)?;
        }
        Ok(())
    }

    pub fn task(&self) -> Task {
        make_task(&self.task, self.task_seed).expect("validated task name")
    }

    pub fn surrogate(&self, task: &Task) -> leon_core::Result<Surrogate> {
        Surrogate::new(task, &self.surrogate, self.surrogate_seed)
    }

    pub fn cohort(&self, jobs: usize) -> Cohort {
        Cohort {
            hyper: self.hyper.clone(),
            methods: self.methods.clone(),
            n_patients: self.n_patients,
            seeds: self.seeds.clone(),
            context_seed: self.context_seed,
            jobs,
        }
    }
}

pub fn check_weights(w: &[f64]) -> Result<(), String> {
    if w.is_empty() {
        return Err("at least one mixture weight is required".into());
    }
    match w.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(format!("mixture weight {v} is outside [0, 1]")),
        None => Ok(()),
    }
}

/// Mixture weights as given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(pub Vec<f64>);

/// Parses `0,0.5,1`.
pub fn parse_weights(s: &str) -> Result<Weights, String> {
    let w = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad mixture weight `{p}`")))
        .collect::<Result<Vec<_>, _>>()?;
    check_weights(&w)?;
    Ok(Weights(w))
}
