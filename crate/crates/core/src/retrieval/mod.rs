//! Retrieval backends: BM25 lexical index, exact cosine vector index,
//! symbol index for dependency retrieval, and the random baseline.

mod lexical;
mod random;
mod symbol;
mod vector;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use lexical::{bm25_score, build_lexical_index, lexical_topk, Bm25Params, LexicalIndex};
pub use random::random_retrieve;
pub use symbol::{
    build_symbol_index, dependency_retrieve, extract_calls, CallSite, DependencyHits, SymbolDef,
    SymbolIndex,
};
pub use vector::{cosine_sim, vector_topk, EmbeddingVector, VectorIndex};

/// Identifier recorded in index headers for [`tokenize_for_index`].
pub const INDEX_TOKENIZER_ID: &str = "alnum-lower-v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub unit_id: u32,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// A ranked result list. `clamped` is set when more results were requested
/// than the index holds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ranked {
    pub hits: Vec<RetrievalResult>,
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    SimBm25,
    SimVector,
    Dependency,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::SimBm25,
        Strategy::SimVector,
        Strategy::Dependency,
        Strategy::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::SimBm25 => "sim_bm25",
            Strategy::SimVector => "sim_vector",
            Strategy::Dependency => "dependency",
            Strategy::Random => "random",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.replace('-', "_").to_ascii_lowercase();
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == norm)
            .ok_or_else(|| format!("unknown strategy {s:?} (sim-bm25, sim-vector, dependency, random)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub strategy: Strategy,
    pub k: usize,
    pub seed: u64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::SimBm25,
            k: 5,
            seed: 0,
        }
    }
}

/// Splits on every non-alphanumeric character and lowercases. `fooBar(x_1)`
/// becomes `["foobar", "x", "1"]`.
pub fn tokenize_for_index(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Best-first order: score descending, then unit id ascending.
pub(crate) fn best_first(a: &(u32, f64), b: &(u32, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Keeps the best `k` of `scored` in best-first order.
pub(crate) fn top_k(mut scored: Vec<(u32, f64)>, k: usize) -> Ranked {
    let clamped = k > scored.len();
    let k = k.min(scored.len());
    if k == 0 {
        return Ranked {
            hits: Vec::new(),
            clamped,
        };
    }
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, best_first);
        scored.truncate(k);
    }
    scored.sort_by(best_first);
    Ranked {
        hits: scored
            .into_iter()
            .enumerate()
            .map(|(i, (unit_id, score))| RetrievalResult {
                unit_id,
                score,
                rank: i + 1,
            })
            .collect(),
        clamped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_tokenization() {
        assert_eq!(tokenize_for_index("fooBar(x_1)"), vec!["foobar", "x", "1"]);
        assert!(tokenize_for_index("").is_empty());
        assert!(tokenize_for_index("(){};").is_empty());
    }

    #[test]
    fn index_tokenization_is_a_fixed_point() {
        let once = tokenize_for_index("std::vector<Foo_Bar> v = MakeV(3);").join(" ");
        assert_eq!(tokenize_for_index(&once).join(" "), once);
    }

    #[test]
    fn strategy_names() {
        assert_eq!("sim-bm25".parse::<Strategy>().unwrap(), Strategy::SimBm25);
        assert_eq!("sim_vector".parse::<Strategy>().unwrap(), Strategy::SimVector);
        assert!("bm25".parse::<Strategy>().is_err());
        for s in Strategy::ALL {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
    }

    #[test]
    fn top_k_orders_and_clamps() {
        let r = top_k(vec![(3, 1.0), (1, 2.0), (2, 1.0), (0, 0.5)], 3);
        let ids: Vec<u32> = r.hits.iter().map(|h| h.unit_id).collect();
        assert_eq!(ids, vec![1, 2, 3]);
        assert_eq!(r.hits.iter().map(|h| h.rank).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(!r.clamped);
        let r = top_k(vec![(0, 1.0)], 4);
        assert!(r.clamped);
        assert_eq!(r.hits.len(), 1);
        assert!(top_k(vec![(0, 1.0)], 0).hits.is_empty());
    }
}
