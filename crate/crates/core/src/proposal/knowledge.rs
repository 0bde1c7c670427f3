//! External knowledge sources and the tool-selection loop that turns them
//! into a prior-knowledge block.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::equivalence::embed::tokenize;
use crate::space::Context;

pub const DEFAULT_TOOL_BUDGET: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceKind {
    /// UTF-8 files read at query time; passages are blank-line separated.
    FileCorpus {
        paths: Vec<PathBuf>,
        #[serde(default = "default_top_k")]
        top_k: usize,
    },
    StaticFacts { text: String },
    Scripted { answers: BTreeMap<String, String> },
}

fn default_top_k() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeSource {
    pub name: String,
    #[serde(flatten)]
    pub kind: SourceKind,
}

fn passages(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                out.push(cur.join("\n"));
                cur.clear();
            }
        } else {
            cur.push(line);
        }
    }
    if !cur.is_empty() {
        out.push(cur.join("\n"));
    }
    out
}

impl KnowledgeSource {
    pub fn static_facts(name: impl Into<String>, text: impl Into<String>) -> Self {
        KnowledgeSource { name: name.into(), kind: SourceKind::StaticFacts { text: text.into() } }
    }

    pub fn file_corpus(name: impl Into<String>, paths: Vec<PathBuf>, top_k: usize) -> Self {
        KnowledgeSource { name: name.into(), kind: SourceKind::FileCorpus { paths, top_k } }
    }

    pub fn scripted<K: Into<String>, V: Into<String>>(name: impl Into<String>, answers: impl IntoIterator<Item = (K, V)>) -> Self {
        KnowledgeSource {
            name: name.into(),
            kind: SourceKind::Scripted {
                answers: answers.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
            },
        }
    }

    /// Answers a query; never fails. Unreadable corpus files are skipped
    /// with a warning.
    pub fn query(&self, query: &str, warnings: &mut Vec<String>) -> String {
        match &self.kind {
            SourceKind::StaticFacts { text } => text.clone(),
            SourceKind::Scripted { answers } => answers.get(query).cloned().unwrap_or_default(),
            SourceKind::FileCorpus { paths, top_k } => {
                let q: BTreeSet<String> = tokenize(query).into_iter().collect();
                if q.is_empty() {
                    return String::new();
                }
                let mut ranked: Vec<(usize, usize, String)> = Vec::new();
                for path in paths {
                    let text = match std::fs::read_to_string(path) {
                        Ok(t) => t,
                        Err(e) => {
                            let msg = format!("knowledge source `{}`: cannot read {}: {e}", self.name, path.display());
                            log::warn!("{msg}");
                            warnings.push(msg);
                            continue;
                        }
                    };
                    for p in passages(&text) {
                        let tokens: BTreeSet<String> = tokenize(&p).into_iter().collect();
                        let overlap = q.intersection(&tokens).count();
                        if overlap > 0 {
                            let order = ranked.len();
                            ranked.push((overlap, order, p));
                        }
                    }
                }
                ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
                ranked.into_iter().take(*top_k).map(|r| r.2).collect::<Vec<_>>().join("\n\n")
            }
        }
    }
}

/// One tool decision of the knowledge loop.
#[derive(Debug, Clone, PartialEq)]
pub enum ToolStep {
    Query { source: String, query: String },
    Stop,
}

/// A completed tool round-trip.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolCall {
    pub source: String,
    pub query: String,
    pub response: String,
}

/// Chooses tool calls and writes the final knowledge text.
pub trait KnowledgePlanner {
    fn next_step(&mut self, task: &str, ctx: &Context, sources: &[KnowledgeSource], history: &[ToolCall]) -> crate::Result<ToolStep>;
    fn synthesize(&mut self, task: &str, ctx: &Context, history: &[ToolCall]) -> crate::Result<String>;
}

/// Runs at most `budget` tool round-trips, then synthesizes. Planner
/// failures yield empty knowledge; unknown sources skip the round.
pub fn generate_knowledge(
    planner: &mut dyn KnowledgePlanner,
    sources: &[KnowledgeSource],
    task: &str,
    ctx: &Context,
    budget: usize,
    warnings: &mut Vec<String>,
) -> String {
    let mut history = Vec::new();
    for _ in 0..budget {
        let step = match planner.next_step(task, ctx, sources, &history) {
            Ok(s) => s,
            Err(e) => {
                warnings.push(format!("knowledge planner failed: {e}"));
                return String::new();
            }
        };
        match step {
            ToolStep::Stop => break,
            ToolStep::Query { source, query } => match sources.iter().find(|s| s.name == source) {
                Some(s) => {
                    let response = s.query(&query, warnings);
                    history.push(ToolCall { source, query, response });
                }
                None => warnings.push(format!("knowledge planner chose unknown source `{source}`")),
            },
        }
    }
    match planner.synthesize(task, ctx, &history) {
        Ok(k) => k,
        Err(e) => {
            warnings.push(format!("knowledge synthesis failed: {e}"));
            String::new()
        }
    }
}

/// Offline planner: cycles through the sources with the task description as
/// the query and concatenates the non-empty answers.
#[derive(Debug, Clone, Default)]
pub struct RoundRobinPlanner;

impl KnowledgePlanner for RoundRobinPlanner {
    fn next_step(&mut self, task: &str, _: &Context, sources: &[KnowledgeSource], history: &[ToolCall]) -> crate::Result<ToolStep> {
        if sources.is_empty() {
            return Ok(ToolStep::Stop);
        }
        let s = &sources[history.len() % sources.len()];
        Ok(ToolStep::Query { source: s.name.clone(), query: task.to_string() })
    }

    fn synthesize(&mut self, _: &str, _: &Context, history: &[ToolCall]) -> crate::Result<String> {
        let parts: Vec<&str> = history.iter().map(|c| c.response.as_str()).filter(|r| !r.is_empty()).collect();
        Ok(parts.join("\n\n"))
    }
}

/// Replays a fixed list of steps, then stops.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPlanner {
    pub steps: Vec<ToolStep>,
    cursor: usize,
}

impl ScriptedPlanner {
    pub fn new(steps: Vec<ToolStep>) -> Self {
        ScriptedPlanner { steps, cursor: 0 }
    }
}

impl KnowledgePlanner for ScriptedPlanner {
    fn next_step(&mut self, _: &str, _: &Context, _: &[KnowledgeSource], _: &[ToolCall]) -> crate::Result<ToolStep> {
        let step = self.steps.get(self.cursor).cloned().unwrap_or(ToolStep::Stop);
        self.cursor += 1;
        Ok(step)
    }

    fn synthesize(&mut self, task: &str, ctx: &Context, history: &[ToolCall]) -> crate::Result<String> {
        RoundRobinPlanner.synthesize(task, ctx, history)
    }
}
