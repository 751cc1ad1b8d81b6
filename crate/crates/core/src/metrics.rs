//! Line-completion metrics: exact match, edit similarity and sentence BLEU.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::Strategy;
use crate::tokenizer::Tokenizer;

/// Trims surrounding whitespace; internal spacing is left alone.
pub fn normalize_line(text: &str) -> &str {
    text.trim()
}

pub fn exact_match(pred: &str, target: &str) -> u8 {
    u8::from(normalize_line(pred) == normalize_line(target))
}

/// Character-level Levenshtein distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 − lev(pred, target) / max(|pred|, |target|)`; two empty strings score 1.
pub fn edit_similarity(pred: &str, target: &str) -> f64 {
    let longest = pred.chars().count().max(target.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(pred, target) as f64 / longest as f64
}

/// Sentence BLEU with a single reference.
///
/// Geometric mean of clipped n-gram precisions for n = 1..=max_n times the
/// brevity penalty. For n ≥ 2 a zero precision becomes `1 / (total + 1)`
/// (add one to numerator and denominator); a zero unigram precision is not
/// smoothed and gives 0.
pub fn bleu(pred: &[&str], target: &[&str], max_n: usize) -> f64 {
    if pred.is_empty() {
        return if target.is_empty() { 1.0 } else { 0.0 };
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand = ngram_counts(pred, n);
        let refs = ngram_counts(target, n);
        let total: usize = cand.values().sum();
        let matched: usize = cand
            .iter()
            .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if matched > 0 {
            matched as f64 / total as f64
        } else if n == 1 {
            return 0.0;
        } else {
            1.0 / (total as f64 + 1.0)
        };
        log_sum += p.ln();
    }
    let (c, r) = (pred.len() as f64, target.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * (log_sum / max_n as f64).exp()
}

fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *m.entry(g).or_insert(0) += 1;
        }
    }
    m
}

/// Text before the first newline.
pub fn truncate_to_first_line(model_output: &str) -> &str {
    model_output.split('\n').next().unwrap_or("")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub instance_id: u32,
    pub prediction: String,
    pub target: String,
    pub em: u8,
    pub es: f64,
    pub bleu: f64,
}

/// Scores one prediction. Both sides are normalized before comparison and
/// BLEU runs over `tok` tokens.
pub fn score(instance_id: u32, prediction: &str, target: &str, tok: &dyn Tokenizer) -> EvalRecord {
    let (p, t) = (normalize_line(prediction), normalize_line(target));
    EvalRecord {
        instance_id,
        prediction: prediction.to_string(),
        target: target.to_string(),
        em: exact_match(p, t),
        es: edit_similarity(p, t),
        bleu: bleu(&tok.tokens(p), &tok.tokens(t), 4),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub strategy: Strategy,
    pub k: usize,
    pub n_instances: usize,
    pub em_pct: f64,
    pub es_pct: f64,
    pub bleu_pct: f64,
}

/// Mean scores ×100, summed in instance-id order.
pub fn aggregate(records: &[EvalRecord], strategy: Strategy, k: usize) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::invalid("no records to aggregate"));
    }
    let mut sorted: Vec<&EvalRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.instance_id);
    let n = sorted.len() as f64;
    let mean = |f: fn(&EvalRecord) -> f64| sorted.iter().map(|r| f(r)).sum::<f64>() / n * 100.0;
    Ok(EvalReport {
        strategy,
        k,
        n_instances: sorted.len(),
        em_pct: mean(|r| r.em as f64),
        es_pct: mean(|r| r.es),
        bleu_pct: mean(|r| r.bleu),
    })
}
