//! Proposal engines: seeded mock samplers and a chat-completions engine,
//! with prompt assembly, reply parsing, reflection and knowledge generation.

pub mod chat;
pub mod knowledge;
pub mod mock;
pub mod parse;
pub mod prompt;

use serde::{Deserialize, Serialize};

pub use chat::{ChatClient, ChatEngine};
pub use knowledge::{generate_knowledge, KnowledgePlanner, KnowledgeSource, RoundRobinPlanner, ScriptedPlanner, ToolStep};
pub use mock::{sample_from_pool, BoltzmannMemoryEngine, HillClimbEngine, RandomEngine};
pub use parse::{parse_designs, Parsed};
pub use prompt::{build_prompt, PromptState, MEMORY_VIEW};

use crate::error::{invalid, Result};
use crate::memory::MemoryEntry;
use crate::space::{Context, Design, DesignSpace};

/// Anything that emits design batches for the outer loop.
pub trait Proposer: Send {
    /// Exactly `b` designs valid in `state.space`.
    fn propose(&mut self, state: &PromptState<'_>, b: usize, warnings: &mut Vec<String>) -> Result<Vec<Design>>;

    /// Free-text critique of the last scored batch. Never fails.
    fn reflect(&mut self, space: &DesignSpace, batch: &[MemoryEntry], task_description: &str, warnings: &mut Vec<String>) -> String;

    /// Prior knowledge from at most `budget` source round-trips. Offline
    /// engines cycle through the sources with the task description as query.
    fn generate_knowledge(
        &mut self,
        sources: &[KnowledgeSource],
        task_description: &str,
        ctx: &Context,
        budget: usize,
        warnings: &mut Vec<String>,
    ) -> String {
        generate_knowledge(&mut RoundRobinPlanner, sources, task_description, ctx, budget, warnings)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EngineSpec {
    Random {},
    BoltzmannMemory {
        /// Defaults to the run temperature.
        #[serde(default)]
        temp: Option<f64>,
        #[serde(default = "default_pool")]
        pool_size: usize,
    },
    HillClimb {
        #[serde(default = "default_step")]
        step: f64,
    },
    ChatApi {
        #[serde(default)]
        endpoint: Option<String>,
        model: String,
        #[serde(default)]
        temperature: Option<f64>,
        #[serde(default = "default_retries")]
        max_retries: usize,
    },
}

fn default_pool() -> usize {
    64
}
fn default_step() -> f64 {
    0.05
}
fn default_retries() -> usize {
    2
}

impl Default for EngineSpec {
    fn default() -> Self {
        EngineSpec::BoltzmannMemory { temp: None, pool_size: default_pool() }
    }
}

impl EngineSpec {
    pub fn is_offline(&self) -> bool {
        !matches!(self, EngineSpec::ChatApi { .. })
    }

    pub fn build(&self, seed: u64, temperature: f64) -> Result<Box<dyn Proposer>> {
        Ok(match self {
            EngineSpec::Random {} => Box::new(RandomEngine::new(seed)),
            EngineSpec::BoltzmannMemory { temp, pool_size } => {
                Box::new(BoltzmannMemoryEngine::new(seed, temp.unwrap_or(temperature), *pool_size)?)
            }
            EngineSpec::HillClimb { step } => Box::new(HillClimbEngine::new(seed, *step)?),
            EngineSpec::ChatApi { endpoint, model, temperature: t, max_retries } => {
                let t = t.unwrap_or(temperature);
                if !(t.is_finite() && t >= 0.0) {
                    return Err(invalid("chat temperature must be finite and >= 0"));
                }
                let client = ChatClient::new(endpoint.as_deref(), model, t)?;
                Box::new(ChatEngine::new(client, *max_retries, seed))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn engine_spec_json() {
        let s: EngineSpec = serde_json::from_str(r#"{"kind": "boltzmann-memory", "temp": 0.5}"#).unwrap();
        assert_eq!(s, EngineSpec::BoltzmannMemory { temp: Some(0.5), pool_size: 64 });
        assert!(serde_json::from_str::<EngineSpec>(r#"{"kind": "random", "x": 1}"#).is_err());
        let c: EngineSpec = serde_json::from_str(r#"{"kind": "chat-api", "model": "m"}"#).unwrap();
        assert!(!c.is_offline());
    }
}
