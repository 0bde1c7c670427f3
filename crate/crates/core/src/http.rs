//! Blocking JSON POST with bounded retries, shared by the chat and embedding
//! clients.

use std::time::Duration;

use serde_json::Value as Json;

use crate::error::{LeonError, Result};

#[derive(Debug, Clone)]
pub struct JsonClient {
    agent: ureq::Agent,
    api_key: Option<String>,
    pub attempts: u32,
    pub base_delay: Duration,
}

impl JsonClient {
    pub fn new(api_key: Option<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder().timeout_global(Some(timeout)).build();
        JsonClient {
            agent: ureq::Agent::new_with_config(config),
            api_key,
            attempts: 3,
            base_delay: Duration::from_millis(250),
        }
    }

    /// POSTs `body` to `url` and parses the JSON reply. Transport failures,
    /// non-2xx statuses and unparseable bodies are retried with exponential
    /// backoff, up to `attempts` tries in total.
    pub fn post(&self, url: &str, body: &Json) -> Result<Json> {
        let mut last = String::new();
        for attempt in 0..self.attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(self.base_delay * 2u32.pow(attempt - 1));
            }
            let mut req = self.agent.post(url);
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", format!("Bearer {key}"));
            }
            match req.send_json(body).and_then(|mut r| r.body_mut().read_json::<Json>()) {
                Ok(v) => return Ok(v),
                Err(e) => {
                    log::warn!("POST {url} attempt {} failed: {e}", attempt + 1);
                    last = e.to_string();
                }
            }
        }
        Err(LeonError::Transport(format!("{url}: {last}")))
    }
}

/// Joins a base URL and a path without doubling the slash.
pub fn join_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}


#[cfg(test)]
mod tests {
    use super::*;

    fn fast(key: Option<&str>) -> JsonClient {
        let mut c = JsonClient::new(key.map(String::from), Duration::from_secs(5));
        c.base_delay = Duration::from_millis(1);
        c
    }

    #[test]
    fn retries_then_succeeds() {
        let (addr, seen, h) = mock::serve(vec![(500, "{}".into()), (200, r#"{"ok":1}"#.into())]);
        let v = fast(Some("k")).post(&join_url(&addr, "/x"), &serde_json::json!({"a": 1})).unwrap();
        h.join().unwrap();
        assert_eq!(v["ok"], 1);
        assert_eq!(seen.lock().unwrap().len(), 2);
    }

    #[test]
    fn gives_up_after_three_attempts() {
        let (addr, seen, h) = mock::serve(vec![(503, "{}".into()); 3]);
        let err = fast(None).post(&join_url(&addr, "x"), &serde_json::json!({})).unwrap_err();
        h.join().unwrap();
        assert!(matches!(err, LeonError::Transport(_)));
        assert_eq!(seen.lock().unwrap().len(), 3);
    }

    #[test]
    fn url_join() {
        assert_eq!(join_url("http://h/v1/", "/chat"), "http://h/v1/chat");
        assert_eq!(join_url("http://h/v1", "chat"), "http://h/v1/chat");
    }
}
