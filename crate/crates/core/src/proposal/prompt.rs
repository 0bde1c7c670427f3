//! Prompt assembly for language-model proposal engines.

use std::fmt::Write as _;

use crate::memory::MemoryEntry;
use crate::space::{render_context, Context, DesignSpace};

pub const KNOWLEDGE_HEADER: &str = "### Prior Knowledge";
pub const PATIENT_HEADER: &str = "### Patient Description";
pub const MEMORY_HEADER: &str = "### Previously Proposed Designs";
pub const REFLECTION_HEADER: &str = "### Reflection";
pub const TASK_HEADER: &str = "### Task";
pub const TABLE_HEADER: &str = "index | design | score";

/// Default number of most recent memory entries shown to the engine.
pub const MEMORY_VIEW: usize = 64;

/// Everything a proposal engine may look at when proposing a batch.
#[derive(Debug, Clone, Copy)]
pub struct PromptState<'a> {
    pub task_name: &'a str,
    pub task_description: &'a str,
    pub space: &'a DesignSpace,
    pub context: &'a Context,
    pub knowledge: &'a str,
    pub reflection: &'a str,
    /// Most recent entries, oldest first.
    pub memory_view: &'a [MemoryEntry],
}

/// Prefixes lines that could be mistaken for a section header (or that
/// start with the escape character itself) with a backslash.
pub fn escape_block(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.split('\n').enumerate() {
        if i > 0 {
            out.push('\n');
        }
        if line.starts_with("###") || line.starts_with('\\') {
            out.push('\\');
        }
        out.push_str(line);
    }
    out
}

/// Plain-text table of scored designs, one row per entry.
pub fn memory_table(space: &DesignSpace, entries: &[MemoryEntry]) -> String {
    let mut out = String::from(TABLE_HEADER);
    for (i, e) in entries.iter().enumerate() {
        let _ = write!(out, "\n{} | {} | {}", i + 1, space.design_to_json(&e.design), e.score);
    }
    out
}

pub fn build_prompt(state: &PromptState<'_>) -> String {
    let sections = [
        (KNOWLEDGE_HEADER, escape_block(state.knowledge)),
        (PATIENT_HEADER, escape_block(&render_context(state.task_name, state.context))),
        (MEMORY_HEADER, memory_table(state.space, state.memory_view)),
        (REFLECTION_HEADER, escape_block(state.reflection)),
        (TASK_HEADER, escape_block(state.task_description)),
    ];
    let mut out = String::new();
    for (i, (header, body)) in sections.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        out.push_str(header);
        out.push('\n');
        out.push_str(body);
    }
    out
}

/// System instructions fixing the structured-output contract.
pub fn proposal_system_prompt(space: &DesignSpace, b: usize) -> String {
    let mut dims = String::new();
    for d in space.dims() {
        let desc = match &d.kind {
            crate::space::DimKind::Continuous { lo, hi } => format!("a number between {lo} and {hi}"),
            crate::space::DimKind::Boolean => "true or false".to_string(),
            crate::space::DimKind::Categorical { labels } => format!("one of {labels:?}"),
        };
        let _ = writeln!(dims, "- \"{}\": {desc}", d.name);
    }
    format!(
        "You are an expert clinician proposing treatment designs for a single patient. \
         Use the prior knowledge, the patient description, and the scores of previously proposed \
         designs (higher is better) to propose new designs.\n\n\
         Reply with a JSON array of exactly {b} objects and nothing else. Each object maps every \
         design dimension to a value:\n{dims}"
    )
}
