use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};

use coderag::providers::conformance::run_conformance;
use coderag::providers::wire::{CompleteRequest, CompleteResponse, EmbedRequest, EmbedResponse, Health, Usage};
use coderag::providers::{
    health, mock_embed, CompletionProvider, CompletionProviderConfig, CompletionRequest, EmbeddingProvider,
    EmbeddingProviderConfig, HttpCompletionClient, HttpEmbeddingClient, ProviderError,
};

const DIMS: usize = 64;

/// Serves `app` on an ephemeral port from a background runtime.
fn spawn(app: Router) -> String {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || rt.block_on(async { axum::serve(listener, app).await.unwrap() }));
    format!("http://{addr}")
}

#[derive(Default)]
struct Counters {
    embed_calls: AtomicUsize,
    failures_left: AtomicUsize,
}

/// Reference embedding server backed by the mock embedder. `scale`
/// multiplies every value so a non-normalizing server can be simulated.
fn embed_app(counters: Arc<Counters>, scale: f64) -> Router {
    Router::new()
        .route(
            "/health",
            get(|| async { Json(Health { status: "ok".into(), model: "mock-hash".into() }) }),
        )
        .route(
            "/embed",
            post(move |State(c): State<Arc<Counters>>, Json(req): Json<EmbedRequest>| async move {
                c.embed_calls.fetch_add(1, Ordering::SeqCst);
                if c.failures_left.load(Ordering::SeqCst) > 0 {
                    c.failures_left.fetch_sub(1, Ordering::SeqCst);
                    return Err((StatusCode::SERVICE_UNAVAILABLE, "warming up".to_string()));
                }
                if req.model != "mock-hash" {
                    return Err((StatusCode::BAD_REQUEST, format!("unknown model {}", req.model)));
                }
                let vectors = req
                    .texts
                    .iter()
                    .map(|t| {
                        mock_embed(t, DIMS, 0)
                            .map(|v| v.values.iter().map(|x| x * scale).collect::<Vec<f64>>())
                            .map_err(|e| (StatusCode::BAD_REQUEST, e.to_string()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Json(EmbedResponse { vectors, dims: DIMS, model: req.model }))
            }),
        )
        .with_state(counters)
}

fn embed_cfg(endpoint: &str) -> EmbeddingProviderConfig {
    EmbeddingProviderConfig {
        endpoint: endpoint.into(),
        dims: DIMS,
        batch_size: 2,
        timeout_ms: 5_000,
        ..Default::default()
    }
}

#[test]
fn reference_server_passes_conformance() {
    let url = spawn(embed_app(Arc::default(), 1.0));
    let report = run_conformance(&url, "mock-hash", 5_000);
    assert!(report.passed(), "{report:#?}");
    assert_eq!(health(&url, 1_000).unwrap().status, "ok");
}

#[test]
fn unnormalized_server_fails_unit_norm_only() {
    let url = spawn(embed_app(Arc::default(), 2.0));
    let report = run_conformance(&url, "mock-hash", 5_000);
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    assert_eq!(failed, ["unit_norm"]);
}

#[test]
fn batches_preserve_order_and_match_mock() {
    let counters = Arc::new(Counters::default());
    let url = spawn(embed_app(counters.clone(), 2.0));
    let client = HttpEmbeddingClient::new(embed_cfg(&url)).unwrap();
    let texts: Vec<String> = ["alpha", "beta gamma", "delta", "alpha", "omega x"].map(String::from).to_vec();
    let vs = client.embed_batch(&texts).unwrap();
    assert_eq!(counters.embed_calls.load(Ordering::SeqCst), 3);
    assert_eq!(vs.len(), 5);
    for (t, v) in texts.iter().zip(&vs) {
        let expect = mock_embed(t, DIMS, 0).unwrap();
        assert!(v.unit_norm);
        for (a, b) in v.values.iter().zip(&expect.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    assert_eq!(vs[0], vs[3]);
    assert!(client.embed_batch(&[]).unwrap().is_empty());
    assert_eq!(counters.embed_calls.load(Ordering::SeqCst), 3);
}

#[test]
fn server_errors_are_retried() {
    let counters = Arc::new(Counters::default());
    counters.failures_left.store(2, Ordering::SeqCst);
    let url = spawn(embed_app(counters.clone(), 1.0));
    let client = HttpEmbeddingClient::new(embed_cfg(&url)).unwrap();
    assert_eq!(client.embed_batch(&["a".into()]).unwrap().len(), 1);
    assert_eq!(counters.embed_calls.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_name_the_failing_batch() {
    let url = spawn(embed_app(Arc::default(), 1.0));
    let client = HttpEmbeddingClient::new(embed_cfg(&url)).unwrap();
    // the third batch holds a text without terms, which the server rejects
    let texts: Vec<String> = ["a", "b", "c", "d", "{}"].map(String::from).to_vec();
    match client.embed_batch(&texts) {
        Err(ProviderError::Batches { batches, message }) => {
            assert_eq!(batches, [2]);
            assert!(message.contains("400"));
        }
        other => panic!("unexpected {other:?}"),
    }
    let mut wrong = embed_cfg(&url);
    wrong.model_name = "other".into();
    let err = HttpEmbeddingClient::new(wrong).unwrap().embed_batch(&["a".into()]).unwrap_err();
    assert!(err.to_string().contains("unknown model other"));
}

#[test]
fn dims_mismatch_is_a_protocol_error() {
    let url = spawn(embed_app(Arc::default(), 1.0));
    let mut cfg = embed_cfg(&url);
    cfg.dims = DIMS * 2;
    let err = HttpEmbeddingClient::new(cfg).unwrap().embed_batch(&["a".into()]).unwrap_err();
    assert!(err.to_string().contains("dims"), "{err}");
}

#[test]
fn unreachable_endpoint_reports_attempts() {
    let mut cfg = CompletionProviderConfig {
        endpoint: "http://127.0.0.1:1".into(),
        timeout_ms: 500,
        retries: 2,
        ..Default::default()
    };
    let client = HttpCompletionClient::new(cfg.clone()).unwrap();
    match client.complete(&CompletionRequest::greedy("x", 4)) {
        Err(ProviderError::Unreachable { attempts, .. }) => assert_eq!(attempts, 2),
        other => panic!("unexpected {other:?}"),
    }
    cfg.retries = 1;
    assert!(HttpCompletionClient::new(cfg).unwrap().complete(&CompletionRequest::greedy("x", 0)).is_err());
}

fn complete_app() -> Router {
    Router::new().route(
        "/complete",
        post(|headers: HeaderMap, Json(req): Json<CompleteRequest>| async move {
            if headers.get("authorization").and_then(|v| v.to_str().ok()) != Some("Bearer s3cret") {
                return Err((StatusCode::UNAUTHORIZED, "{\"error\":\"missing token\"}".to_string()));
            }
            if req.prompt == "boom" {
                return Err((StatusCode::UNPROCESSABLE_ENTITY, "{\"error\":\"prompt rejected\"}".to_string()));
            }
            Ok(Json(CompleteResponse {
                text: format!("echo {}", req.max_tokens),
                usage: Usage { prompt_tokens: req.prompt.split_whitespace().count(), completion_tokens: 2 },
                latency_ms: Some(1.5),
            }))
        }),
    )
}

#[test]
fn completion_round_trip_with_token_and_verbatim_errors() {
    let url = spawn(complete_app());
    let cfg = CompletionProviderConfig {
        endpoint: url.clone(),
        bearer_token: Some("s3cret".into()),
        ..Default::default()
    };
    let client = HttpCompletionClient::new(cfg.clone()).unwrap();
    let resp = client.complete(&CompletionRequest::greedy("a b c", 7)).unwrap();
    assert_eq!(resp.text, "echo 7");
    assert_eq!((resp.prompt_tokens, resp.completion_tokens), (3, 2));
    assert!(resp.latency_ms > 0.0);

    match client.complete(&CompletionRequest::greedy("boom", 7)) {
        Err(ProviderError::Server { status, body }) => {
            assert_eq!(status, 422);
            assert_eq!(body, "{\"error\":\"prompt rejected\"}");
        }
        other => panic!("unexpected {other:?}"),
    }
    let anonymous = HttpCompletionClient::new(CompletionProviderConfig { bearer_token: None, ..cfg }).unwrap();
    assert!(matches!(
        anonymous.complete(&CompletionRequest::greedy("a", 1)),
        Err(ProviderError::Server { status: 401, .. })
    ));
}
