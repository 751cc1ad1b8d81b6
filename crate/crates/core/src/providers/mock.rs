//! Deterministic in-process providers for offline runs and tests.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    CompletionProvider, CompletionRequest, CompletionResponse, EmbeddingProvider, ProviderError,
};
use crate::error::{Error, Result};
use crate::retrieval::{tokenize_for_index, EmbeddingVector};
use crate::tokenizer::{CodeTokenizer, Tokenizer};

/// Emitted by the copy oracle when the prompt holds no continuation.
pub const COPY_ORACLE_SENTINEL: &str = "/* no retrieved continuation */";

/// Coordinate a term is hashed to under `seed`.
pub fn term_coordinate(term: &str, dims: usize, seed: u64) -> usize {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(term.as_bytes());
    let digest = h.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(head) % dims as u64) as usize
}

/// Hashed bag of index terms: each term adds its frequency to one seeded
/// coordinate, then the vector is L2-normalized.
pub fn mock_embed(text: &str, dims: usize, seed: u64) -> Result<EmbeddingVector> {
    if dims < 8 {
        return Err(Error::invalid("mock embeddings need at least 8 dims"));
    }
    let terms = tokenize_for_index(text);
    if terms.is_empty() {
        return Err(Error::invalid("text has no terms to embed"));
    }
    let mut values = vec![0.0; dims];
    for t in &terms {
        values[term_coordinate(t, dims, seed)] += 1.0;
    }
    EmbeddingVector::normalized(values)
}

#[derive(Debug, Clone)]
pub struct MockEmbedder {
    pub dims: usize,
    pub seed: u64,
    pub model: String,
}

impl MockEmbedder {
    pub fn new(dims: usize, seed: u64) -> Self {
        Self {
            dims,
            seed,
            model: "mock-hash".into(),
        }
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn model(&self) -> &str {
        &self.model
    }

    fn dims(&self) -> usize {
        self.dims
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        texts
            .iter()
            .map(|t| mock_embed(t, self.dims, self.seed).map_err(|e| ProviderError::Protocol(e.to_string())))
            .collect()
    }
}

/// Simulated cost of one completion:
/// `base_ms + per_prompt_token_ms·prompt + per_completion_token_ms·completion`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyModel {
    pub base_ms: f64,
    pub per_prompt_token_ms: f64,
    pub per_completion_token_ms: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            base_ms: 20.0,
            per_prompt_token_ms: 0.05,
            per_completion_token_ms: 2.0,
        }
    }
}

impl LatencyModel {
    pub fn latency_ms(&self, prompt_tokens: usize, completion_tokens: usize) -> f64 {
        self.base_ms
            + self.per_prompt_token_ms * prompt_tokens as f64
            + self.per_completion_token_ms * completion_tokens as f64
    }
}

/// Stop sequences, then the `max_tokens` cap, then usage and latency.
fn finish(
    text: &str,
    request: &CompletionRequest,
    tok: &dyn Tokenizer,
    latency: &LatencyModel,
) -> CompletionResponse {
    let mut text = text;
    for stop in request.stop.iter().flatten().filter(|s| !s.is_empty()) {
        if let Some(i) = text.find(stop.as_str()) {
            text = &text[..i];
        }
    }
    let pieces = tok.pieces(text);
    let text = match pieces.get(request.max_tokens) {
        Some(p) => text[..p.start].trim_end(),
        None => text,
    };
    let prompt_tokens = tok.count(&request.prompt);
    let completion_tokens = pieces.len().min(request.max_tokens);
    CompletionResponse {
        text: text.to_string(),
        prompt_tokens,
        completion_tokens,
        latency_ms: latency.latency_ms(prompt_tokens, completion_tokens),
    }
}

/// Looks for the query's last `match_lines` lines (the query being the
/// final `query_lines` lines of the prompt) inside the retrieved prefix and
/// returns the line after the occurrence nearest to the query.
pub fn mock_complete_copy_oracle(prompt: &str, query_lines: usize, match_lines: usize) -> String {
    let lines: Vec<&str> = prompt.split('\n').collect();
    let m = match_lines.min(query_lines);
    if m == 0 || lines.len() <= query_lines {
        return COPY_ORACLE_SENTINEL.to_string();
    }
    let prefix = &lines[..lines.len() - query_lines];
    let needle = &lines[lines.len() - m..];
    if prefix.len() <= m {
        return COPY_ORACLE_SENTINEL.to_string();
    }
    (0..prefix.len() - m)
        .rev()
        .find(|&i| &prefix[i..i + m] == needle)
        .map_or_else(|| COPY_ORACLE_SENTINEL.to_string(), |i| prefix[i + m].to_string())
}

/// A perfectly retrieval-grounded stand-in model.
#[derive(Clone)]
pub struct CopyOracleCompleter {
    pub query_lines: usize,
    pub match_lines: usize,
    pub latency: LatencyModel,
    tok: Arc<dyn Tokenizer>,
}

impl CopyOracleCompleter {
    pub fn new(query_lines: usize) -> Self {
        Self {
            query_lines,
            match_lines: query_lines,
            latency: LatencyModel::default(),
            tok: Arc::new(CodeTokenizer),
        }
    }

    pub fn with_latency(mut self, latency: LatencyModel) -> Self {
        self.latency = latency;
        self
    }

    pub fn with_tokenizer(mut self, tok: Arc<dyn Tokenizer>) -> Self {
        self.tok = tok;
        self
    }
}

impl CompletionProvider for CopyOracleCompleter {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        request.validate()?;
        let text = mock_complete_copy_oracle(&request.prompt, self.query_lines, self.match_lines);
        Ok(finish(&text, request, self.tok.as_ref(), &self.latency))
    }

    fn simulated_latency(&self) -> bool {
        true
    }
}

/// Returns the same text for every prompt.
#[derive(Clone)]
pub struct ConstantCompleter {
    pub text: String,
    pub latency: LatencyModel,
    tok: Arc<dyn Tokenizer>,
}

impl ConstantCompleter {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            latency: LatencyModel::default(),
            tok: Arc::new(CodeTokenizer),
        }
    }

    pub fn with_latency(mut self, latency: LatencyModel) -> Self {
        self.latency = latency;
        self
    }
}

impl CompletionProvider for ConstantCompleter {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        request.validate()?;
        Ok(finish(&self.text, request, self.tok.as_ref(), &self.latency))
    }

    fn simulated_latency(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::cosine_sim;

    #[test]
    fn identical_texts_embed_identically() {
        let e = MockEmbedder::new(64, 1);
        let v = e.embed_batch(&["a".into(), "a".into()]).unwrap();
        assert_eq!(v[0], v[1]);
        assert!(e.embed_batch(&[]).unwrap().is_empty());
        assert!((cosine_sim(&v[0], &v[1]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_construction() {
        let texts = ["foo bar foo", "Baz(qux)", "x_1 x"];
        let vs = MockEmbedder::new(32, 9)
            .embed_batch(&texts.iter().map(|s| s.to_string()).collect::<Vec<_>>())
            .unwrap();
        for (text, v) in texts.iter().zip(&vs) {
            let mut expect = vec![0.0; 32];
            for t in tokenize_for_index(text) {
                expect[term_coordinate(&t, 32, 9)] += 1.0;
            }
            let norm = expect.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
            for (a, b) in v.values.iter().zip(&expect) {
                assert!((a - b / norm).abs() < 1e-12);
            }
            assert!(v.unit_norm);
        }
    }

    #[test]
    fn disjoint_vocabulary_is_orthogonal() {
        // pick words whose coordinates at dims=256 do not collide
        let words: Vec<String> = (0..40).map(|i| format!("word{i}")).collect();
        let mut used = std::collections::HashSet::new();
        let distinct: Vec<&String> = words
            .iter()
            .filter(|w| used.insert(term_coordinate(w, 256, 0)))
            .take(6)
            .collect();
        let a = format!("{} {} {}", distinct[0], distinct[1], distinct[2]);
        let b = format!("{} {} {}", distinct[3], distinct[4], distinct[5]);
        let c = cosine_sim(&mock_embed(&a, 256, 0).unwrap(), &mock_embed(&b, 256, 0).unwrap()).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn extra_term_gives_partial_similarity() {
        let a = mock_embed("alpha beta", 256, 0).unwrap();
        let b = mock_embed("alpha beta gamma", 256, 0).unwrap();
        let c = cosine_sim(&a, &b).unwrap();
        assert!(c > 0.0 && c < 1.0);
        let coords: Vec<usize> = ["alpha", "beta", "gamma"].iter().map(|t| term_coordinate(t, 256, 0)).collect();
        if coords[0] != coords[1] && !coords[..2].contains(&coords[2]) {
            // two shared unit coordinates out of three: 2 / (sqrt(2)·sqrt(3))
            assert!((c - 2.0 / 6f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn mock_embed_errors() {
        assert!(mock_embed("(){}", 64, 0).is_err());
        assert!(mock_embed("a", 4, 0).is_err());
    }

    #[test]
    fn copy_oracle_finds_continuation() {
        let unit = "int f() {\n  a = 1;\n  b = 2;\n  c = 3;\n}";
        let query = "  a = 1;\n  b = 2;";
        let prompt = format!("{unit}\n\n{query}");
        assert_eq!(mock_complete_copy_oracle(&prompt, 2, 2), "  c = 3;");
        assert_eq!(mock_complete_copy_oracle(query, 2, 2), COPY_ORACLE_SENTINEL);
        let miss = format!("int g() {{\n  z = 0;\n}}\n\n{query}");
        assert_eq!(mock_complete_copy_oracle(&miss, 2, 2), COPY_ORACLE_SENTINEL);
    }

    #[test]
    fn constant_and_token_cap() {
        let c = ConstantCompleter::new("return value + 1;");
        let r = c.complete(&CompletionRequest::greedy("anything", 512)).unwrap();
        assert_eq!(r.text, "return value + 1;");
        assert_eq!(r.completion_tokens, 5);
        let r = c.complete(&CompletionRequest::greedy("anything", 1)).unwrap();
        assert!(r.completion_tokens <= 1);
        assert_eq!(r.text, "return");
        assert!(c.complete(&CompletionRequest::greedy("x", 0)).is_err());
        let mut hot = CompletionRequest::greedy("x", 4);
        hot.temperature = 0.7;
        assert!(c.complete(&hot).is_err());
    }

    #[test]
    fn stop_sequences_cut_text() {
        let c = ConstantCompleter::new("a = 1;\nb = 2;");
        let mut req = CompletionRequest::greedy("p", 64);
        req.stop = Some(vec!["\n".into()]);
        assert_eq!(c.complete(&req).unwrap().text, "a = 1;");
    }

    #[test]
    fn latency_grows_with_prompt() {
        let c = ConstantCompleter::new("x;");
        let short = c.complete(&CompletionRequest::greedy("a", 8)).unwrap();
        let long = c.complete(&CompletionRequest::greedy("a b c d e f", 8)).unwrap();
        assert!(long.latency_ms > short.latency_ms);
        assert_eq!(short, c.complete(&CompletionRequest::greedy("a", 8)).unwrap());
    }
}
