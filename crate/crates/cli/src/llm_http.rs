//! HTTP transport for the model boundary, plus a concurrency bound shared by
//! every caller in the process.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rubricflow_core::{LlmClient, LlmError, LlmRequest, StubLlm};
use serde::{Deserialize, Serialize};

pub const URL_VAR: &str = "ASSESS_LLM_URL";
pub const KEY_VAR: &str = "ASSESS_LLM_KEY";

/// Request body posted to the endpoint.
#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct WireRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    pub schema: String,
    pub max_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    output: String,
}

/// Posts each request as JSON and returns the `output` field of a JSON
/// reply, or the raw body when the reply is not of that shape.
pub struct HttpLlm {
    url: String,
    key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpLlm {
    /// Must not be called from inside an async runtime.
    pub fn new(url: &str, key: Option<String>, timeout: Duration) -> Result<HttpLlm, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(HttpLlm { url: url.to_string(), key, client })
    }
}

impl LlmClient for HttpLlm {
    fn complete(&self, req: &LlmRequest) -> Result<String, LlmError> {
        let body = WireRequest {
            model: req.model_id.clone(),
            system: req.system_text.clone(),
            user: req.user_text.clone(),
            schema: req.schema_id.clone(),
            max_tokens: req.max_tokens,
        };
        let mut call = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| LlmError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(LlmError::Status { status: status.as_u16(), body: text });
        }
        Ok(match serde_json::from_str::<WireResponse>(&text) {
            Ok(w) => w.output,
            Err(_) => text,
        })
    }
}

/// Builds the client named by `url`: `stub:` URLs select the stub, anything
/// else is an HTTP endpoint. No URL means the offline heuristic stub.
pub fn llm_from_url(url: Option<&str>, key: Option<String>) -> Result<Box<dyn LlmClient>, LlmError> {
    match url.map(str::trim).filter(|u| !u.is_empty()) {
        None => {
            log::warn!("{URL_VAR} is not set; using the offline heuristic stub");
            Ok(Box::new(StubLlm::heuristic()))
        }
        Some(u) if u.starts_with("stub:") => Ok(Box::new(StubLlm::from_url(u)?)),
        Some(u) if u.starts_with("http://") || u.starts_with("https://") => {
            Ok(Box::new(HttpLlm::new(u, key, Duration::from_secs(30))?))
        }
        Some(u) => Err(LlmError::Config(format!("unsupported model URL {u:?}"))),
    }
}

/// Reads the client from the environment.
pub fn llm_from_env() -> Result<Box<dyn LlmClient>, LlmError> {
    let url = std::env::var(URL_VAR).ok();
    let key = std::env::var(KEY_VAR).ok().filter(|k| !k.is_empty());
    llm_from_url(url.as_deref(), key)
}

/// Lets at most `limit` calls through to the inner client at once.
pub struct BoundedLlm {
    inner: Box<dyn LlmClient>,
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl BoundedLlm {
    pub fn new(inner: Box<dyn LlmClient>, limit: usize) -> BoundedLlm {
        BoundedLlm { inner, limit: limit.max(1), in_flight: Mutex::new(0), freed: Condvar::new() }
    }
}

struct Permit<'a>(&'a BoundedLlm);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("permit lock") -= 1;
        self.0.freed.notify_one();
    }
}

impl LlmClient for BoundedLlm {
    fn complete(&self, req: &LlmRequest) -> Result<String, LlmError> {
        let permit = {
            let mut n = self.in_flight.lock().expect("permit lock");
            while *n >= self.limit {
                n = self.freed.wait(n).expect("permit lock");
            }
            *n += 1;
            Permit(self)
        };
        let out = self.inner.complete(req);
        drop(permit);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct Slow {
        now: AtomicUsize,
        peak: AtomicUsize,
    }

    impl LlmClient for Slow {
        fn complete(&self, _: &LlmRequest) -> Result<String, LlmError> {
            let n = self.now.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(n, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(15));
            self.now.fetch_sub(1, Ordering::SeqCst);
            Ok("{}".into())
        }
    }

    #[test]
    fn bound_is_respected() {
        let slow = Arc::new(Slow { now: AtomicUsize::new(0), peak: AtomicUsize::new(0) });
        let bounded = BoundedLlm::new(Box::new(slow.clone()), 2);
        let req = LlmRequest {
            model_id: "m".into(),
            system_text: "s".into(),
            user_text: "u".into(),
            schema_id: "x".into(),
            max_tokens: 1,
        };
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| bounded.complete(&req).unwrap());
            }
        });
        assert_eq!(slow.peak.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn url_selection() {
        assert!(llm_from_url(None, None).is_ok());
        assert!(llm_from_url(Some("stub:heuristic"), None).is_ok());
        assert!(matches!(llm_from_url(Some("ftp://x"), None), Err(LlmError::Config(_))));
    }
}
