//! Embedding and completion backends: HTTP clients for the JSON wire
//! protocol and deterministic in-process mocks.

pub mod conformance;
mod http;
mod mock;
pub mod wire;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retrieval::EmbeddingVector;

pub use http::{health, HttpCompletionClient, HttpEmbeddingClient};
pub use mock::{
    mock_complete_copy_oracle, mock_embed, term_coordinate, ConstantCompleter, CopyOracleCompleter,
    LatencyModel, MockEmbedder, COPY_ORACLE_SENTINEL,
};

/// Environment variable holding the bearer token sent to providers.
pub const TOKEN_ENV: &str = "CODERAG_API_TOKEN";

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider unreachable after {attempts} attempts: {message}")]
    Unreachable { attempts: u32, message: String },

    #[error("embedding batches {batches:?} failed: {message}")]
    Batches { batches: Vec<usize>, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    /// Non-success HTTP status; `body` is the provider's payload verbatim.
    #[error("provider returned {status}: {body}")]
    Server { status: u16, body: String },

    #[error("invalid request: {0}")]
    Request(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingProviderConfig {
    pub endpoint: String,
    pub model_name: String,
    pub dims: usize,
    pub batch_size: usize,
    pub timeout_ms: u64,
    /// Total attempts per request.
    pub retries: u32,
    pub max_in_flight: usize,
    #[serde(skip)]
    pub bearer_token: Option<String>,
}

impl Default for EmbeddingProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8088".into(),
            model_name: "mock-hash".into(),
            dims: 256,
            batch_size: 32,
            timeout_ms: 30_000,
            retries: 3,
            max_in_flight: 8,
            bearer_token: None,
        }
    }
}

impl EmbeddingProviderConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.dims == 0 || self.batch_size == 0 || self.max_in_flight == 0 {
            return Err(ProviderError::Request(
                "dims, batch_size and max_in_flight must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompletionProviderConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    pub retries: u32,
    #[serde(skip)]
    pub bearer_token: Option<String>,
}

impl Default for CompletionProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8089".into(),
            timeout_ms: 120_000,
            retries: 3,
            bearer_token: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: usize,
    /// Always 0: greedy decoding.
    pub temperature: f64,
    pub stop: Option<Vec<String>>,
}

impl CompletionRequest {
    pub fn greedy(prompt: impl Into<String>, max_tokens: usize) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens,
            temperature: 0.0,
            stop: None,
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.max_tokens == 0 {
            return Err(ProviderError::Request("max_tokens must be at least 1".into()));
        }
        if self.temperature != 0.0 {
            return Err(ProviderError::Request("only greedy decoding (temperature 0) is supported".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
    pub latency_ms: f64,
}

pub trait EmbeddingProvider: Send + Sync {
    fn model(&self) -> &str;
    fn dims(&self) -> usize;
    /// One unit-norm vector per text, in input order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError>;
}

pub trait CompletionProvider: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError>;

    /// Whether `latency_ms` is simulated rather than measured.
    fn simulated_latency(&self) -> bool {
        false
    }
}

pub(crate) fn backoff(attempt: u32) -> Duration {
    Duration::from_millis(100 << attempt.min(10))
}
