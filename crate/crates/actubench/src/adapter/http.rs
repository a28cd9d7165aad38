//! HTTP chat-completion adapter (OpenAI-compatible wire format).
//!
//! Used for live runs only; CI and the acceptance suite run on scripted
//! adapters. Transport failures are retried up to three times with
//! exponential backoff; content-level failures are never retried here.

use std::sync::Arc;
use std::time::Duration;

use serde_json::json;

use super::{AdapterError, ChatAdapter, ChatRequest, ChatResponse, RateLimiter};
use crate::domain::TokenUsage;

const MAX_ATTEMPTS: u32 = 3;
const BACKOFF_BASE_MS: u64 = 200;

pub struct HttpAdapter {
    endpoint: String,
    model_id: String,
    provider: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    limiter: Arc<RateLimiter>,
}

impl HttpAdapter {
    pub fn new(
        endpoint: impl Into<String>,
        provider: impl Into<String>,
        model_id: impl Into<String>,
        api_key: Option<String>,
        limiter: Arc<RateLimiter>,
    ) -> Self {
        HttpAdapter {
            endpoint: endpoint.into(),
            provider: provider.into(),
            model_id: model_id.into(),
            api_key,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("client construction"),
            limiter,
        }
    }

    /// Read the API key from `<PROVIDER>_API_KEY` (upper-cased provider).
    pub fn from_env(
        endpoint: impl Into<String>,
        provider: impl Into<String>,
        model_id: impl Into<String>,
        limiter: Arc<RateLimiter>,
    ) -> Result<Self, AdapterError> {
        let provider = provider.into();
        let var = format!("{}_API_KEY", provider.to_uppercase().replace('-', "_"));
        let key = std::env::var(&var).map_err(|_| AdapterError::MissingApiKey(var))?;
        Ok(HttpAdapter::new(endpoint, provider, model_id, Some(key), limiter))
    }

    fn attempt(&self, req: &ChatRequest) -> Result<ChatResponse, AttemptError> {
        let mut body = json!({
            "model": self.model_id,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "max_tokens": req.max_output_tokens,
        });
        for (k, v) in &req.decode_params {
            body[k] = v.clone();
        }
        let mut request = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                AttemptError::Transient(format!("timeout: {e}"))
            } else {
                AttemptError::Transient(format!("transport: {e}"))
            }
        })?;
        let status = response.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(AttemptError::Transient(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(AttemptError::Fatal(format!("status {status}")));
        }
        let value: serde_json::Value = response
            .json()
            .map_err(|e| AttemptError::Fatal(format!("invalid JSON body: {e}")))?;
        let text = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| AttemptError::Fatal("missing choices[0].message.content".into()))?
            .to_string();
        let usage = TokenUsage::new(
            value["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            value["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        );
        Ok(ChatResponse { text, usage })
    }
}

enum AttemptError {
    Transient(String),
    Fatal(String),
}

impl ChatAdapter for HttpAdapter {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, AdapterError> {
        self.limiter.admit(&self.provider);
        let mut last_transient = String::new();
        for attempt in 0..MAX_ATTEMPTS {
            match self.attempt(req) {
                Ok(resp) => return Ok(resp),
                Err(AttemptError::Fatal(msg)) => {
                    return Err(AdapterError::MalformedResponse(msg))
                }
                Err(AttemptError::Transient(msg)) => {
                    last_transient = msg;
                    if attempt + 1 < MAX_ATTEMPTS {
                        std::thread::sleep(Duration::from_millis(
                            BACKOFF_BASE_MS << attempt,
                        ));
                    }
                }
            }
        }
        Err(AdapterError::EndpointUnreachable(format!(
            "{} after {MAX_ATTEMPTS} attempts: {last_transient}",
            self.endpoint
        )))
    }
}
