use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use reqwest::blocking::{Client, RequestBuilder};
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{CompleteRequest, CompleteResponse, EmbedRequest, EmbedResponse, Health};
use super::{
    backoff, CompletionProvider, CompletionProviderConfig, CompletionRequest, CompletionResponse,
    EmbeddingProvider, EmbeddingProviderConfig, ProviderError,
};
use crate::retrieval::EmbeddingVector;

fn client(timeout_ms: u64) -> Result<Client, ProviderError> {
    Client::builder()
        .timeout(Duration::from_millis(timeout_ms))
        .build()
        .map_err(|e| ProviderError::Request(e.to_string()))
}

fn url(endpoint: &str, path: &str) -> String {
    format!("{}{}", endpoint.trim_end_matches('/'), path)
}

fn authorize(req: RequestBuilder, token: Option<&str>) -> RequestBuilder {
    match token {
        Some(t) => req.bearer_auth(t),
        None => req,
    }
}

/// POSTs `body`, retrying transport failures and 5xx responses with
/// exponential backoff. 4xx responses are returned at once.
fn post_json<B: Serialize, R: DeserializeOwned>(
    client: &Client,
    url: &str,
    body: &B,
    token: Option<&str>,
    attempts: u32,
) -> Result<R, ProviderError> {
    let attempts = attempts.max(1);
    let mut last = String::new();
    for attempt in 0..attempts {
        if attempt > 0 {
            std::thread::sleep(backoff(attempt - 1));
        }
        match authorize(client.post(url).json(body), token).send() {
            Ok(resp) => {
                let status = resp.status();
                let text = resp.text().map_err(|e| ProviderError::Protocol(e.to_string()))?;
                if status.is_success() {
                    return serde_json::from_str(&text)
                        .map_err(|e| ProviderError::Protocol(format!("{e}: {text}")));
                }
                if status.is_client_error() {
                    return Err(ProviderError::Server {
                        status: status.as_u16(),
                        body: text,
                    });
                }
                last = format!("{status}: {text}");
            }
            Err(e) => last = e.to_string(),
        }
        tracing::debug!("POST {url} attempt {} failed: {last}", attempt + 1);
    }
    Err(ProviderError::Unreachable {
        attempts,
        message: last,
    })
}

/// `GET /health`.
pub fn health(endpoint: &str, timeout_ms: u64) -> Result<Health, ProviderError> {
    let resp = client(timeout_ms)?
        .get(url(endpoint, "/health"))
        .send()
        .map_err(|e| ProviderError::Unreachable {
            attempts: 1,
            message: e.to_string(),
        })?;
    let status = resp.status();
    let text = resp.text().map_err(|e| ProviderError::Protocol(e.to_string()))?;
    if !status.is_success() {
        return Err(ProviderError::Server {
            status: status.as_u16(),
            body: text,
        });
    }
    serde_json::from_str(&text).map_err(|e| ProviderError::Protocol(format!("{e}: {text}")))
}

type BatchResult = Result<Vec<EmbeddingVector>, ProviderError>;

pub struct HttpEmbeddingClient {
    cfg: EmbeddingProviderConfig,
    client: Client,
}

impl HttpEmbeddingClient {
    pub fn new(cfg: EmbeddingProviderConfig) -> Result<Self, ProviderError> {
        cfg.validate()?;
        Ok(Self {
            client: client(cfg.timeout_ms)?,
            cfg,
        })
    }

    fn embed_chunk(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        let body = EmbedRequest {
            model: self.cfg.model_name.clone(),
            texts: texts.to_vec(),
        };
        let resp: EmbedResponse = post_json(
            &self.client,
            &url(&self.cfg.endpoint, "/embed"),
            &body,
            self.cfg.bearer_token.as_deref(),
            self.cfg.retries,
        )?;
        if resp.dims != self.cfg.dims {
            return Err(ProviderError::Protocol(format!(
                "provider reports {} dims, configured {}",
                resp.dims, self.cfg.dims
            )));
        }
        if resp.vectors.len() != texts.len() {
            return Err(ProviderError::Protocol(format!(
                "{} vectors for {} texts",
                resp.vectors.len(),
                texts.len()
            )));
        }
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.cfg.dims {
                    return Err(ProviderError::Protocol(format!(
                        "vector of {} dims, expected {}",
                        v.len(),
                        self.cfg.dims
                    )));
                }
                EmbeddingVector::normalized(v).map_err(|e| ProviderError::Protocol(e.to_string()))
            })
            .collect()
    }
}

impl EmbeddingProvider for HttpEmbeddingClient {
    fn model(&self) -> &str {
        &self.cfg.model_name
    }

    fn dims(&self) -> usize {
        self.cfg.dims
    }

    /// Splits `texts` into `batch_size` requests with at most `max_in_flight`
    /// outstanding; results are placed by batch index.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let chunks: Vec<&[String]> = texts.chunks(self.cfg.batch_size).collect();
        let slots: Mutex<Vec<Option<BatchResult>>> = Mutex::new((0..chunks.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let workers = self.cfg.max_in_flight.min(chunks.len());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(chunk) = chunks.get(i) else { break };
                    let r = self.embed_chunk(chunk);
                    slots.lock().expect("no panics while holding the lock")[i] = Some(r);
                });
            }
        });

        let mut out = Vec::with_capacity(texts.len());
        let mut failed = Vec::new();
        let mut message = String::new();
        for (i, slot) in slots.into_inner().expect("workers joined").into_iter().enumerate() {
            match slot.expect("every batch is attempted") {
                Ok(mut v) => out.append(&mut v),
                Err(e) => {
                    if message.is_empty() {
                        message = e.to_string();
                    }
                    failed.push(i);
                }
            }
        }
        if failed.is_empty() {
            Ok(out)
        } else {
            Err(ProviderError::Batches {
                batches: failed,
                message,
            })
        }
    }
}

pub struct HttpCompletionClient {
    cfg: CompletionProviderConfig,
    client: Client,
}

impl HttpCompletionClient {
    pub fn new(cfg: CompletionProviderConfig) -> Result<Self, ProviderError> {
        Ok(Self {
            client: client(cfg.timeout_ms)?,
            cfg,
        })
    }
}

impl CompletionProvider for HttpCompletionClient {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        request.validate()?;
        let body = CompleteRequest {
            prompt: request.prompt.clone(),
            max_tokens: request.max_tokens,
            temperature: request.temperature,
            stop: request.stop.clone(),
        };
        let started = Instant::now();
        let resp: CompleteResponse = post_json(
            &self.client,
            &url(&self.cfg.endpoint, "/complete"),
            &body,
            self.cfg.bearer_token.as_deref(),
            self.cfg.retries,
        )?;
        Ok(CompletionResponse {
            text: resp.text,
            prompt_tokens: resp.usage.prompt_tokens,
            completion_tokens: resp.usage.completion_tokens,
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }
}
