//! Pluggable text generation used by the assistant and the quiz generator.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeneratorError {
    #[error("generator unavailable: {0}")]
    Unavailable(String),
    #[error("generator returned an invalid response: {0}")]
    BadResponse(String),
    #[error("prompt not understood: {0}")]
    BadPrompt(String),
}

/// Produces text for a prompt. Implementations must bound their own latency.
pub trait TextGenerator: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, prompt: &str) -> Result<String, GeneratorError>;
}

pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;

/// Client for an HTTP text-generation endpoint.
///
/// Sends `POST <endpoint>` with JSON `{"prompt": ...}` and an optional
/// `Authorization: Bearer <key>` header, and expects JSON `{"text": ...}`.
/// The whole exchange is bounded by `timeout`.
pub struct RemoteGenerator {
    id: String,
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct RemoteResponse {
    text: String,
}

impl RemoteGenerator {
    pub fn new(id: &str, endpoint: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build()
            .new_agent();
        Self { id: id.to_string(), endpoint: endpoint.to_string(), api_key, agent }
    }
}

impl TextGenerator for RemoteGenerator {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, prompt: &str) -> Result<String, GeneratorError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(RemoteRequest { prompt })
            .map_err(|e| GeneratorError::Unavailable(e.to_string()))?;
        let body: RemoteResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| GeneratorError::BadResponse(e.to_string()))?;
        if body.text.trim().is_empty() {
            return Err(GeneratorError::BadResponse("empty text".into()));
        }
        Ok(body.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Instant;

    #[test]
    fn unreachable_endpoint_fails_fast() {
        // Port 9 on loopback is closed in test environments.
        let g = RemoteGenerator::new("remote", "http://127.0.0.1:9/generate", None, Duration::from_millis(500));
        let t = Instant::now();
        assert!(matches!(g.generate("hi"), Err(GeneratorError::Unavailable(_))));
        assert!(t.elapsed() < Duration::from_secs(5));
    }
}
