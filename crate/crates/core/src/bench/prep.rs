use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::RetrievalUnit;
use crate::error::Result;
use crate::providers::EmbeddingProvider;
use crate::retrieval::{build_lexical_index, build_symbol_index, Bm25Params, LexicalIndex, SymbolIndex, VectorIndex};

pub enum PrepBackend<'a> {
    Bm25(Bm25Params),
    Vector(&'a dyn EmbeddingProvider),
    Symbol,
}

pub enum BuiltIndex {
    Bm25(LexicalIndex),
    Vector(VectorIndex),
    Symbol(SymbolIndex),
}

/// Wall-clock milliseconds per preparation phase, always with both
/// `embedding` and `indexing` keys.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreparationStats {
    pub phases_ms: BTreeMap<String, f64>,
}

impl PreparationStats {
    pub fn get(&self, phase: &str) -> f64 {
        self.phases_ms.get(phase).copied().unwrap_or(0.0)
    }
}

/// Builds one index and times it. Lexical and symbol indexes need no
/// embedding, so that phase reports exactly 0.
pub fn measure_preparation(units: &[RetrievalUnit], backend: PrepBackend<'_>) -> Result<(PreparationStats, BuiltIndex)> {
    let mut embedding = 0.0;
    let t = Instant::now();
    let built = match backend {
        PrepBackend::Bm25(params) => BuiltIndex::Bm25(build_lexical_index(units, params)?),
        PrepBackend::Symbol => BuiltIndex::Symbol(build_symbol_index(units)),
        PrepBackend::Vector(embedder) => {
            let texts: Vec<String> = units.iter().map(|u| u.content.clone()).collect();
            let vectors = embedder.embed_batch(&texts)?;
            embedding = t.elapsed().as_secs_f64() * 1e3;
            let t = Instant::now();
            let index = VectorIndex::new(embedder.dims(), units.iter().map(|u| u.id).zip(vectors).collect())?;
            let indexing = t.elapsed().as_secs_f64() * 1e3;
            let stats = PreparationStats {
                phases_ms: [("embedding".to_string(), embedding), ("indexing".to_string(), indexing)].into(),
            };
            return Ok((stats, BuiltIndex::Vector(index)));
        }
    };
    let indexing = t.elapsed().as_secs_f64() * 1e3;
    let stats = PreparationStats {
        phases_ms: [("embedding".to_string(), embedding), ("indexing".to_string(), indexing)].into(),
    };
    Ok((stats, built))
}
