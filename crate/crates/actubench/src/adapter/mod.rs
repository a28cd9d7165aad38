//! Uniform interface to LLM endpoints.
//!
//! Every agent role and every benchmarked model talks through a
//! [`ChatAdapter`]. Production runs bind HTTP adapters; tests and dry runs
//! bind deterministic scripted adapters. Cost is computed from the model
//! registry with exact decimal arithmetic.

mod http;
mod rate_limit;
mod registry;
mod scripted;

pub use http::HttpAdapter;
pub use rate_limit::RateLimiter;
pub use registry::{ModelRegistry, RegistryError};
pub use scripted::ScriptedAdapter;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::domain::{ModelSpec, TokenUsage};
use crate::money::Usd;

/// One chat completion request. Provider wire formats are an adapter detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub max_output_tokens: u64,
    /// Pass-through decode parameters (temperature etc.), recorded verbatim.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub decode_params: BTreeMap<String, serde_json::Value>,
}

impl ChatRequest {
    pub fn new(system: impl Into<String>, user: impl Into<String>, max_output_tokens: u64) -> Self {
        ChatRequest {
            system: system.into(),
            user: user.into(),
            max_output_tokens,
            decode_params: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: TokenUsage,
}

impl ChatResponse {
    pub fn new(text: impl Into<String>, usage: TokenUsage) -> Self {
        ChatResponse {
            text: text.into(),
            usage,
        }
    }
}

/// Pipeline and evaluation roles an adapter can be bound to.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    AgentA,
    AgentB,
    AgentC,
    Auxiliary,
    Evaluatee,
    Judge,
}

#[derive(Debug, thiserror::Error)]
pub enum AdapterError {
    #[error("endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("request timed out after {0} attempts")]
    Timeout(u32),
    #[error("run budget exceeded: spent {spent} of max {max}")]
    BudgetExceeded { spent: Usd, max: Usd },
    #[error("script exhausted after {0} responses")]
    ScriptExhausted(usize),
    #[error("missing API key in environment variable {0}")]
    MissingApiKey(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
}

/// Completion endpoint. Implementations retry transient transport failures
/// internally; they never retry on parse failures, which belong to callers.
pub trait ChatAdapter: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, AdapterError>;
}

/// A role bound to one model and its adapter for a run.
#[derive(Clone)]
pub struct AdapterBinding {
    pub role: Role,
    pub model: ModelSpec,
    adapter: Arc<dyn ChatAdapter>,
}

impl AdapterBinding {
    pub fn new(role: Role, model: ModelSpec, adapter: Arc<dyn ChatAdapter>) -> Self {
        AdapterBinding {
            role,
            model,
            adapter,
        }
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, AdapterError> {
        self.adapter.complete(req)
    }
}

impl std::fmt::Debug for AdapterBinding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdapterBinding")
            .field("role", &self.role)
            .field("model", &self.model.model_key())
            .finish()
    }
}

/// Construct a binding whose `complete()` dequeues the given responses in
/// order. Deterministic: identical scripts and call order give identical
/// responses and usages.
pub fn script_adapter(role: Role, model: ModelSpec, responses: Vec<ChatResponse>) -> AdapterBinding {
    AdapterBinding::new(role, model, Arc::new(ScriptedAdapter::new(responses)))
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("no published price for {model_key}")]
pub struct MissingPrice {
    pub model_key: String,
}

/// cost = tokens_in / 10^6 * price_in + tokens_out / 10^6 * price_out,
/// exact decimal arithmetic.
pub fn compute_cost(usage: TokenUsage, spec: &ModelSpec) -> Result<Usd, MissingPrice> {
    let (price_in, price_out) = match (spec.price_in_per_1m_tokens, spec.price_out_per_1m_tokens) {
        (Some(i), Some(o)) => (i, o),
        _ => {
            return Err(MissingPrice {
                model_key: spec.model_key(),
            })
        }
    };
    let per_tokens = |tokens: u64, price_per_1m: Usd| -> i128 {
        // Registry prices carry at most six fractional digits, so the
        // division by 10^6 stays exact in picodollars.
        tokens as i128 * price_per_1m.picodollars() / 1_000_000
    };
    Ok(Usd::from_picodollars(
        per_tokens(usage.tokens_in, price_in) + per_tokens(usage.tokens_out, price_out),
    ))
}

/// Missing-price rows (registry "---") are reported as zero with an
/// unknown-cost flag instead of failing the run.
pub fn compute_cost_or_zero(usage: TokenUsage, spec: &ModelSpec) -> (Usd, bool) {
    match compute_cost(usage, spec) {
        Ok(cost) => (cost, false),
        Err(_) => (Usd::ZERO, true),
    }
}

/// Wrapper that enforces a maximum spend per run across all calls.
pub struct BudgetedAdapter {
    inner: Arc<dyn ChatAdapter>,
    spec: ModelSpec,
    max_spend: Usd,
    spent: Mutex<Usd>,
}

impl BudgetedAdapter {
    pub fn new(inner: Arc<dyn ChatAdapter>, spec: ModelSpec, max_spend: Usd) -> Self {
        BudgetedAdapter {
            inner,
            spec,
            max_spend,
            spent: Mutex::new(Usd::ZERO),
        }
    }

    pub fn spent(&self) -> Usd {
        *self.spent.lock().unwrap()
    }
}

impl ChatAdapter for BudgetedAdapter {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, AdapterError> {
        {
            let spent = self.spent.lock().unwrap();
            if *spent >= self.max_spend {
                return Err(AdapterError::BudgetExceeded {
                    spent: *spent,
                    max: self.max_spend,
                });
            }
        }
        let resp = self.inner.complete(req)?;
        let (cost, _) = compute_cost_or_zero(resp.usage, &self.spec);
        *self.spent.lock().unwrap() += cost;
        Ok(resp)
    }
}
