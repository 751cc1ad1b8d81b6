//! Okapi BM25 over retrieval units.
//!
//! score(D, Q) = Σ_{t ∈ Q} idf(t) · tf·(k1+1) / (tf + k1·(1 − b + b·|D|/avgdl))
//! idf(t)      = ln(1 + (N − df + 0.5) / (df + 0.5))
//!
//! The `ln(1 + ·)` form keeps idf positive, so scores are never negative.
//! Every occurrence of a term in the query contributes.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{tokenize_for_index, top_k, Ranked, INDEX_TOKENIZER_ID};
use crate::corpus::RetrievalUnit;
use crate::error::{Error, Result};
use crate::store::{self, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexicalIndex {
    params: Bm25Params,
    /// Ascending unit ids; `doc_len[i]` belongs to `doc_ids[i]`.
    doc_ids: Vec<u32>,
    doc_len: Vec<u32>,
    avg_doc_len: f64,
    /// term -> (unit_id, tf), sorted by unit_id.
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

impl LexicalIndex {
    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_len(&self, unit_id: u32) -> Option<u32> {
        self.position(unit_id).map(|i| self.doc_len[i])
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn postings(&self, term: &str) -> &[(u32, u32)] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn unit_ids(&self) -> &[u32] {
        &self.doc_ids
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    fn position(&self, unit_id: u32) -> Option<usize> {
        self.doc_ids.binary_search(&unit_id).ok()
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.doc_ids.len() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn tf_part(&self, tf: u32, dl: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl as f64 / self.avg_doc_len))
    }

    /// Header line followed by the document lengths and one line per term.
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = LexicalHeader {
            format_version: FORMAT_VERSION,
            kind: "bm25".into(),
            k1: self.params.k1,
            b: self.params.b,
            tokenizer_id: INDEX_TOKENIZER_ID.into(),
        };
        let mut records = Vec::with_capacity(self.postings.len() + 1);
        records.push(LexicalRecord::Docs {
            doc_len: self.doc_ids.iter().copied().zip(self.doc_len.iter().copied()).collect(),
        });
        records.extend(self.postings.iter().map(|(t, p)| LexicalRecord::Term {
            term: t.clone(),
            postings: p.clone(),
        }));
        store::write_jsonl(path, &header, &records)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, records): (LexicalHeader, Vec<LexicalRecord>) = store::read_jsonl(path)?;
        store::check_version(path, header.format_version)?;
        if header.kind != "bm25" || header.tokenizer_id != INDEX_TOKENIZER_ID {
            return Err(store::format_err(path, "not a bm25 index for this tokenizer"));
        }
        let mut docs = None;
        let mut postings = BTreeMap::new();
        for rec in records {
            match rec {
                LexicalRecord::Docs { doc_len } => docs = Some(doc_len),
                LexicalRecord::Term { term, postings: p } => {
                    postings.insert(term, p);
                }
            }
        }
        let docs = docs.ok_or_else(|| store::format_err(path, "missing document lengths"))?;
        let (doc_ids, doc_len): (Vec<u32>, Vec<u32>) = docs.into_iter().unzip();
        Ok(Self {
            params: Bm25Params {
                k1: header.k1,
                b: header.b,
            },
            avg_doc_len: mean_len(&doc_len),
            doc_ids,
            doc_len,
            postings,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct LexicalHeader {
    format_version: u32,
    kind: String,
    k1: f64,
    b: f64,
    tokenizer_id: String,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LexicalRecord {
    Docs { doc_len: Vec<(u32, u32)> },
    Term { term: String, postings: Vec<(u32, u32)> },
}

fn mean_len(lens: &[u32]) -> f64 {
    lens.iter().map(|&l| l as f64).sum::<f64>() / lens.len() as f64
}

pub fn build_lexical_index(units: &[RetrievalUnit], params: Bm25Params) -> Result<LexicalIndex> {
    if units.is_empty() {
        return Err(Error::invalid("cannot index an empty unit set"));
    }
    let mut seen = HashSet::with_capacity(units.len());
    if let Some(dup) = units.iter().find(|u| !seen.insert(u.id)) {
        return Err(Error::invalid(format!("duplicate unit id {}", dup.id)));
    }

    let mut order: Vec<&RetrievalUnit> = units.iter().collect();
    order.sort_by_key(|u| u.id);
    let per_doc: Vec<(u32, u32, BTreeMap<String, u32>)> = order
        .par_iter()
        .map(|u| {
            let terms = tokenize_for_index(&u.content);
            let mut tf = BTreeMap::new();
            for t in &terms {
                *tf.entry(t.clone()).or_insert(0u32) += 1;
            }
            (u.id, terms.len() as u32, tf)
        })
        .collect();

    let mut doc_ids = Vec::with_capacity(per_doc.len());
    let mut doc_len = Vec::with_capacity(per_doc.len());
    let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
    for (id, len, tf) in per_doc {
        doc_ids.push(id);
        doc_len.push(len);
        for (term, count) in tf {
            postings.entry(term).or_default().push((id, count));
        }
    }
    Ok(LexicalIndex {
        params,
        avg_doc_len: mean_len(&doc_len),
        doc_ids,
        doc_len,
        postings,
    })
}

pub fn bm25_score(index: &LexicalIndex, query_terms: &[String], unit_id: u32) -> Result<f64> {
    let pos = index
        .position(unit_id)
        .ok_or_else(|| Error::invalid(format!("unit {unit_id} is not in the index")))?;
    let dl = index.doc_len[pos];
    let mut score = 0.0;
    for term in query_terms {
        let plist = index.postings(term);
        if let Ok(i) = plist.binary_search_by_key(&unit_id, |&(id, _)| id) {
            score += index.idf(plist.len()) * index.tf_part(plist[i].1, dl);
        }
    }
    Ok(score)
}

/// Top-`k` units for `query_text`, scoring every document. Documents that
/// share no term with the query score 0 and are still eligible.
pub fn lexical_topk(index: &LexicalIndex, query_text: &str, k: usize) -> Ranked {
    let terms = tokenize_for_index(query_text);
    let mut scores = vec![0.0f64; index.doc_ids.len()];
    for term in &terms {
        let plist = index.postings(term);
        if plist.is_empty() {
            continue;
        }
        let idf = index.idf(plist.len());
        for &(id, tf) in plist {
            let pos = index.position(id).expect("postings reference indexed units");
            scores[pos] += idf * index.tf_part(tf, index.doc_len[pos]);
        }
    }
    let scored = index.doc_ids.iter().copied().zip(scores).collect();
    let ranked = top_k(scored, k);
    if ranked.clamped {
        tracing::warn!("k={k} exceeds the {} indexed units", index.doc_count());
    }
    ranked
}
