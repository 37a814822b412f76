use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::backend::{BackendError, Gated};
use crate::error::{Error, Result};

/// Port for the text-generation model that writes the final explanation.
pub trait LlmBackend: Send + Sync {
    fn name(&self) -> &str;
    fn max_parallelism(&self) -> usize {
        usize::MAX
    }
    fn complete(&self, prompt: &str) -> std::result::Result<String, BackendError>;
}

impl<B: LlmBackend> LlmBackend for Gated<B> {
    fn name(&self) -> &str {
        self.inner().name()
    }
    fn max_parallelism(&self) -> usize {
        self.gate().limit()
    }
    fn complete(&self, prompt: &str) -> std::result::Result<String, BackendError> {
        self.gate().run(|| self.inner().complete(prompt))
    }
}

pub const STUB_PREFIX: &str = "EXPLANATION STUB: ";

/// Offline backend: echoes the concept list found in the prompt.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubLlm;

impl LlmBackend for StubLlm {
    fn name(&self) -> &str {
        "stub"
    }

    fn complete(&self, prompt: &str) -> std::result::Result<String, BackendError> {
        let concepts = prompt
            .lines()
            .rev()
            .find_map(|l| l.strip_prefix("concepts:"))
            .map(str::trim)
            .unwrap_or("(none)");
        Ok(format!("{STUB_PREFIX}{concepts}"))
    }
}

pub fn prompt_digest(prompt: &str) -> String {
    Sha256::digest(prompt.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Deserialize)]
struct RecordedLine {
    prompt_sha256: String,
    response: String,
}

/// Replays responses captured earlier, keyed by the SHA-256 of the prompt.
#[derive(Debug, Clone, Default)]
pub struct RecordedLlm {
    responses: BTreeMap<String, String>,
}

impl RecordedLlm {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut responses = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: RecordedLine =
                serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            responses.insert(rec.prompt_sha256, rec.response);
        }
        Ok(RecordedLlm { responses })
    }

    pub fn with(mut self, prompt: &str, response: &str) -> Self {
        self.responses.insert(prompt_digest(prompt), response.to_string());
        self
    }
}

impl LlmBackend for RecordedLlm {
    fn name(&self) -> &str {
        "recorded"
    }

    fn complete(&self, prompt: &str) -> std::result::Result<String, BackendError> {
        self.responses
            .get(&prompt_digest(prompt))
            .cloned()
            .ok_or_else(|| BackendError::Failed {
                backend: "recorded".into(),
                message: "no recorded response for this prompt".into(),
            })
    }
}

/// Name of the environment variable holding the API credential.
pub const API_KEY_ENV: &str = "KINN_LLM_API_KEY";

/// Client for an OpenAI-style text completion endpoint.
#[derive(Debug, Clone)]
pub struct HttpLlm {
    endpoint: String,
    model: String,
    timeout: Duration,
    max_tokens: u32,
    api_key: Option<String>,
}

impl HttpLlm {
    pub fn new(endpoint: &str, model: &str, timeout: Duration, max_tokens: u32) -> Self {
        HttpLlm {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            timeout,
            max_tokens,
            api_key: None,
        }
    }

    /// Read the credential from [`API_KEY_ENV`] if set.
    pub fn with_env_credential(mut self) -> Self {
        self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        self
    }

    fn fail(&self, message: String) -> BackendError {
        BackendError::Failed {
            backend: "http".into(),
            message,
        }
    }
}

impl LlmBackend for HttpLlm {
    fn name(&self) -> &str {
        "http"
    }

    fn max_parallelism(&self) -> usize {
        4
    }

    fn complete(&self, prompt: &str) -> std::result::Result<String, BackendError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let body = serde_json::json!({
            "model": self.model,
            "prompt": prompt,
            "max_tokens": self.max_tokens,
            "temperature": 0,
        });
        let mut req = agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout { backend: "http".into() },
            ureq::Error::Io(ref io) if io.kind() == std::io::ErrorKind::TimedOut => {
                BackendError::Timeout { backend: "http".into() }
            }
            ureq::Error::StatusCode(code) => self.fail(format!("endpoint returned status {code}")),
            other => BackendError::Unreachable {
                backend: "http".into(),
                message: other.to_string(),
            },
        })?;
        let value: serde_json::Value = resp
            .into_body()
            .read_json()
            .map_err(|e| self.fail(format!("unreadable response: {e}")))?;
        value["choices"][0]["text"]
            .as_str()
            .map(|t| t.trim().to_string())
            .ok_or_else(|| self.fail("response has no choices[0].text".into()))
    }
}

/// Ask the backend for an explanation of `prompt`.
pub fn generate_explanation(client: &dyn LlmBackend, prompt: &str) -> std::result::Result<String, BackendError> {
    client.complete(prompt)
}
