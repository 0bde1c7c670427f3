//! Chat-completions backed proposal engine and knowledge planner.

use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value as Json};

use super::knowledge::{generate_knowledge, KnowledgePlanner, KnowledgeSource, ToolCall, ToolStep};
use super::mock::random_design;
use super::parse::parse_designs;
use super::prompt::{build_prompt, escape_block, memory_table, proposal_system_prompt, PromptState, MEMORY_HEADER};
use super::Proposer;
use crate::error::{LeonError, Result};
use crate::http::{join_url, JsonClient};
use crate::memory::MemoryEntry;
use crate::space::{render_context, Context, Design, DesignSpace};

pub const CHAT_BASE_ENV: &str = "CHAT_API_BASE";
pub const CHAT_KEY_ENV: &str = "CHAT_API_KEY";

const REFLECTION_SYSTEM: &str = "You review the progress of an iterative treatment design search. \
Summarize in a few sentences what the scores suggest and how the next batch of proposals should change.";

#[derive(Debug, Clone)]
pub struct ChatClient {
    base: String,
    pub model: String,
    pub temperature: f64,
    http: JsonClient,
}

impl ChatClient {
    /// `endpoint` falls back to `CHAT_API_BASE`; the key is read from
    /// `CHAT_API_KEY` when present.
    pub fn new(endpoint: Option<&str>, model: &str, temperature: f64) -> Result<Self> {
        let base = match endpoint {
            Some(e) => e.to_string(),
            None => std::env::var(CHAT_BASE_ENV)
                .map_err(|_| LeonError::InvalidInput(format!("chat engine needs an endpoint or {CHAT_BASE_ENV}")))?,
        };
        let key = std::env::var(CHAT_KEY_ENV).ok();
        Ok(ChatClient { base, model: model.to_string(), temperature, http: JsonClient::new(key, Duration::from_secs(120)) })
    }

    pub fn with_http(mut self, http: JsonClient) -> Self {
        self.http = http;
        self
    }

    /// Content of the first choice for a system + user exchange.
    pub fn complete(&self, system: &str, user: &str) -> Result<String> {
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let reply = self.http.post(&join_url(&self.base, "chat/completions"), &body)?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(Json::as_str)
            .map(str::to_string)
            .ok_or_else(|| LeonError::Parse("chat reply has no choices[0].message.content".into()))
    }
}

#[derive(Debug, Clone)]
pub struct ChatEngine {
    pub client: ChatClient,
    pub max_retries: usize,
    rng: ChaCha8Rng,
}

impl ChatEngine {
    pub fn new(client: ChatClient, max_retries: usize, seed: u64) -> Self {
        ChatEngine { client, max_retries, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Proposer for ChatEngine {
    /// Requests the missing designs until `b` are collected or the retry
    /// budget runs out; remaining slots are filled uniformly at random.
    fn propose(&mut self, state: &PromptState<'_>, b: usize, warnings: &mut Vec<String>) -> Result<Vec<Design>> {
        let user = build_prompt(state);
        let mut designs = Vec::with_capacity(b);
        let mut attempt = 0;
        while designs.len() < b && attempt <= self.max_retries {
            attempt += 1;
            let missing = b - designs.len();
            match self.client.complete(&proposal_system_prompt(state.space, missing), &user) {
                Ok(reply) => match parse_designs(&reply, state.space, missing) {
                    Ok(p) => {
                        if p.rejects > 0 {
                            log::debug!("{} rejected proposals in reply", p.rejects);
                        }
                        designs.extend(p.designs);
                    }
                    Err(e) => log::warn!("unparseable proposal reply: {e}"),
                },
                Err(e) => log::warn!("proposal request failed: {e}"),
            }
        }
        if designs.len() < b {
            let n = b - designs.len();
            warnings.push(format!("chat engine filled {n} of {b} proposals at random after {attempt} attempts"));
            designs.extend((0..n).map(|_| random_design(state.space, &mut self.rng)));
        }
        Ok(designs)
    }

    fn reflect(&mut self, space: &DesignSpace, batch: &[MemoryEntry], task_description: &str, warnings: &mut Vec<String>) -> String {
        let user = format!(
            "### Task Description\n{}\n\n{MEMORY_HEADER}\n{}",
            escape_block(task_description),
            memory_table(space, batch)
        );
        match self.client.complete(REFLECTION_SYSTEM, &user) {
            Ok(text) => text,
            Err(e) => {
                warnings.push(format!("reflection failed: {e}"));
                String::new()
            }
        }
    }

    fn generate_knowledge(
        &mut self,
        sources: &[KnowledgeSource],
        task_description: &str,
        ctx: &Context,
        budget: usize,
        warnings: &mut Vec<String>,
    ) -> String {
        let mut planner = ChatPlanner { client: &self.client };
        generate_knowledge(&mut planner, sources, task_description, ctx, budget, warnings)
    }
}

/// Tool selection through the chat model. Each turn the model answers with
/// `{"source": ..., "query": ...}` or `{"stop": true}`.
pub struct ChatPlanner<'a> {
    pub client: &'a ChatClient,
}

fn transcript(task: &str, ctx: &Context, history: &[ToolCall]) -> String {
    let mut out = format!("### Task\n{}\n\n### Patient Description\n{}", escape_block(task), render_context("task", ctx));
    for (i, call) in history.iter().enumerate() {
        out.push_str(&format!(
            "\n\n### Tool Call {}\nsource: {}\nquery: {}\nresponse:\n{}",
            i + 1,
            call.source,
            call.query,
            escape_block(&call.response)
        ));
    }
    out
}

/// Parses one tool-selection reply. Anything unrecognised stops the loop.
pub fn parse_tool_step(reply: &str) -> ToolStep {
    let span = match (reply.find('{'), reply.rfind('}')) {
        (Some(a), Some(b)) if b > a => &reply[a..=b],
        _ => return ToolStep::Stop,
    };
    let Ok(v) = serde_json::from_str::<Json>(span) else {
        return ToolStep::Stop;
    };
    if v.get("stop").and_then(Json::as_bool) == Some(true) {
        return ToolStep::Stop;
    }
    match (v.get("source").and_then(Json::as_str), v.get("query").and_then(Json::as_str)) {
        (Some(s), Some(q)) => ToolStep::Query { source: s.to_string(), query: q.to_string() },
        _ => ToolStep::Stop,
    }
}

impl KnowledgePlanner for ChatPlanner<'_> {
    fn next_step(&mut self, task: &str, ctx: &Context, sources: &[KnowledgeSource], history: &[ToolCall]) -> Result<ToolStep> {
        let names: Vec<&str> = sources.iter().map(|s| s.name.as_str()).collect();
        let system = format!(
            "You gather background knowledge before optimizing a treatment for one patient. \
             Available knowledge sources: {names:?}. Reply with a JSON object \
             {{\"source\": <name>, \"query\": <text>}} to query a source, or {{\"stop\": true}} when you know enough."
        );
        Ok(parse_tool_step(&self.client.complete(&system, &transcript(task, ctx, history))?))
    }

    fn synthesize(&mut self, task: &str, ctx: &Context, history: &[ToolCall]) -> Result<String> {
        let system = "Write a concise summary of the knowledge relevant to optimizing this patient's treatment.";
        self.client.complete(system, &transcript(task, ctx, history))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::mock::serve;
    use crate::space::Dim;

    fn reply(content: &str) -> (u16, String) {
        (200, json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string())
    }

    fn fast_client(base: &str) -> ChatClient {
        let mut http = JsonClient::new(None, Duration::from_secs(5));
        http.attempts = 1;
        ChatClient::new(Some(base), "m", 1.0).unwrap().with_http(http)
    }

    fn space() -> DesignSpace {
        DesignSpace::new(vec![Dim::continuous("Dose", 0.0, 100.0)]).unwrap()
    }

    #[test]
    fn proposes_from_reply_and_sends_contract() {
        let (addr, seen, h) = serve(vec![reply(r#"[{"Dose": 10}, {"Dose": 20}]"#)]);
        let mut e = ChatEngine::new(fast_client(&addr), 2, 0);
        let sp = space();
        let ctx = Context::new("p1", vec![0.5]);
        let st = PromptState { task_name: "dose", task_description: "d", space: &sp, context: &ctx, knowledge: "", reflection: "", memory_view: &[] };
        let mut w = Vec::new();
        let out = e.propose(&st, 2, &mut w).unwrap();
        h.join().unwrap();
        assert_eq!(out, vec![Design::reals(&[10.0]), Design::reals(&[20.0])]);
        assert!(w.is_empty());
        let req = &seen.lock().unwrap()[0];
        let req: Json = serde_json::from_str(req).unwrap();
        assert_eq!((req["model"].as_str(), req["temperature"].as_f64()), (Some("m"), Some(1.0)));
        assert!(req["messages"][0]["content"].as_str().unwrap().contains("JSON array"));
    }

    #[test]
    fn garbage_replies_fall_back_to_random() {
        let (addr, _, h) = serve(vec![reply("no idea"), reply("[{\"Dose\": 5}]")]);
        let mut e = ChatEngine::new(fast_client(&addr), 1, 0);
        let sp = space();
        let ctx = Context::new("p1", vec![0.5]);
        let st = PromptState { task_name: "dose", task_description: "d", space: &sp, context: &ctx, knowledge: "", reflection: "", memory_view: &[] };
        let mut w = Vec::new();
        let out = e.propose(&st, 3, &mut w).unwrap();
        h.join().unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0], Design::reals(&[5.0]));
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn reflection_degrades_to_empty() {
        let mut e = ChatEngine::new(fast_client("http://127.0.0.1:9"), 0, 0);
        let mut w = Vec::new();
        assert_eq!(e.reflect(&space(), &[], "d", &mut w), "");
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn tool_step_parsing() {
        assert_eq!(parse_tool_step(r#"{"stop": true}"#), ToolStep::Stop);
        assert_eq!(
            parse_tool_step("ok: {\"source\": \"kb\", \"query\": \"renal\"}"),
            ToolStep::Query { source: "kb".into(), query: "renal".into() }
        );
        assert_eq!(parse_tool_step("nothing"), ToolStep::Stop);
    }

    #[test]
    fn knowledge_loop_over_chat() {
        let (addr, _, h) = serve(vec![
            reply(r#"{"source": "kb", "query": "q"}"#),
            reply(r#"{"stop": true}"#),
            reply("summary"),
        ]);
        let mut e = ChatEngine::new(fast_client(&addr), 0, 0);
        let sources = vec![KnowledgeSource::static_facts("kb", "fact")];
        let mut w = Vec::new();
        let k = e.generate_knowledge(&sources, "d", &Context::reference(1), 5, &mut w);
        h.join().unwrap();
        assert_eq!(k, "summary");
    }
}
