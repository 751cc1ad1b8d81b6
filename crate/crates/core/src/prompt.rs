//! Augmented prompt assembly with token budgeting.
//!
//! Retrieved snippets are prepended to the query so that the snippet that
//! matters most sits right before it: for similarity retrieval the most
//! similar unit, for dependency retrieval the first-called definition.

use serde::{Deserialize, Serialize};

use crate::corpus::RetrievalUnit;
use crate::error::{Error, Result};
use crate::retrieval::RetrievalResult;
use crate::tokenizer::Tokenizer;

/// 4096-token sequence window minus 512 generated tokens.
pub const DEFAULT_MAX_PROMPT_TOKENS: usize = 4096 - 512;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub separator: String,
    pub max_prompt_tokens: usize,
    /// Prefix each snippet with a `// <source path>` line.
    pub include_source_header: bool,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            separator: "\n\n".into(),
            max_prompt_tokens: DEFAULT_MAX_PROMPT_TOKENS,
            include_source_header: false,
        }
    }
}

impl PromptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_prompt_tokens == 0 {
            return Err(Error::config("max_prompt_tokens must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub prompt_text: String,
    pub query_text: String,
    /// In concatenation order (farthest from the query first).
    pub included_unit_ids: Vec<u32>,
    pub prompt_token_count: usize,
    pub truncated: bool,
}

pub fn count_tokens(tok: &dyn Tokenizer, text: &str) -> usize {
    tok.count(text)
}

/// `d_(K) ⊕ … ⊕ d_(1) ⊕ q`: least similar first, most similar adjacent to the
/// query. `results` must be in descending score order.
pub fn assemble_similarity_prompt<'a>(
    results: &[RetrievalResult],
    unit: impl Fn(u32) -> Option<&'a RetrievalUnit>,
    query: &str,
    cfg: &PromptConfig,
    tok: &dyn Tokenizer,
) -> Result<PromptBundle> {
    if results.windows(2).any(|w| w[1].score > w[0].score) {
        return Err(Error::invalid("similarity results must be sorted by descending score"));
    }
    let nearest_first = results
        .iter()
        .map(|r| unit(r.unit_id).ok_or_else(|| Error::invalid(format!("unknown unit {}", r.unit_id))))
        .collect::<Result<Vec<_>>>()?;
    assemble(&nearest_first, query, cfg, tok)
}

/// `d_m ⊕ … ⊕ d_1 ⊕ q`: `defs` in call order, so the first-called definition
/// ends up adjacent to the query.
pub fn assemble_dependency_prompt(
    defs: &[&RetrievalUnit],
    query: &str,
    cfg: &PromptConfig,
    tok: &dyn Tokenizer,
) -> Result<PromptBundle> {
    assemble(defs, query, cfg, tok)
}

/// `nearest_first[0]` goes right before the query. Over budget, whole
/// snippets are dropped from the far end until the prompt fits.
fn assemble(
    nearest_first: &[&RetrievalUnit],
    query: &str,
    cfg: &PromptConfig,
    tok: &dyn Tokenizer,
) -> Result<PromptBundle> {
    cfg.validate()?;
    let query_tokens = tok.count(query);
    if query_tokens > cfg.max_prompt_tokens {
        return Err(Error::invalid(format!(
            "query alone has {query_tokens} tokens, budget is {}",
            cfg.max_prompt_tokens
        )));
    }
    let snippet = |u: &RetrievalUnit| {
        if cfg.include_source_header {
            format!("// {}\n{}", u.source_path, u.content)
        } else {
            u.content.clone()
        }
    };
    let texts: Vec<String> = nearest_first.iter().map(|u| snippet(u)).collect();

    let mut keep = texts.len();
    loop {
        let mut prompt = String::new();
        for t in texts[..keep].iter().rev() {
            prompt.push_str(t);
            prompt.push_str(&cfg.separator);
        }
        prompt.push_str(query);
        let count = tok.count(&prompt);
        if count <= cfg.max_prompt_tokens || keep == 0 {
            return Ok(PromptBundle {
                prompt_text: prompt,
                query_text: query.to_string(),
                included_unit_ids: nearest_first[..keep].iter().rev().map(|u| u.id).collect(),
                prompt_token_count: count,
                truncated: keep < texts.len(),
            });
        }
        keep -= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UnitKind;
    use crate::tokenizer::CodeTokenizer;

    fn unit(id: u32, content: &str) -> RetrievalUnit {
        RetrievalUnit {
            id,
            source_path: format!("lib/u{id}.cc"),
            kind: UnitKind::Function,
            name: None,
            start_line: 1,
            end_line: 1,
            content: content.into(),
            token_count: CodeTokenizer.count(content),
        }
    }

    fn hit(unit_id: u32, score: f64, rank: usize) -> RetrievalResult {
        RetrievalResult { unit_id, score, rank }
    }

    #[test]
    fn most_similar_is_adjacent_to_query() {
        let units = [unit(1, "int a();"), unit(2, "int b();")];
        let find = |id| units.iter().find(|u| u.id == id);
        let cfg = PromptConfig::default();
        let b = assemble_similarity_prompt(&[hit(1, 0.9, 1), hit(2, 0.5, 2)], find, "q();", &cfg, &CodeTokenizer)
            .unwrap();
        assert_eq!(b.prompt_text, "int b();\n\nint a();\n\nq();");
        assert_eq!(b.included_unit_ids, vec![2, 1]);
        assert!(!b.truncated);
        assert!(b.prompt_text.ends_with(&b.query_text));
        assert_eq!(b.prompt_token_count, CodeTokenizer.count(&b.prompt_text));
    }

    #[test]
    fn no_results_is_just_the_query() {
        let b = assemble_similarity_prompt(&[], |_| None, "x = 1;", &PromptConfig::default(), &CodeTokenizer)
            .unwrap();
        assert_eq!(b.prompt_text, "x = 1;");
        assert_eq!(b.prompt_token_count, 4);
    }

    #[test]
    fn budget_drops_least_similar() {
        // A = 10 tokens, B = 10 tokens, sep = 2 tokens, q = 4 tokens
        let units = [unit(1, "a a a a a a a a a a"), unit(2, "b b b b b b b b b b")];
        let find = |id| units.iter().find(|u| u.id == id);
        let cfg = PromptConfig {
            max_prompt_tokens: 16,
            ..PromptConfig::default()
        };
        let b = assemble_similarity_prompt(&[hit(1, 0.9, 1), hit(2, 0.5, 2)], find, "x = 1;", &cfg, &CodeTokenizer)
            .unwrap();
        assert_eq!(b.included_unit_ids, vec![1]);
        assert!(b.truncated);
        assert_eq!(b.prompt_token_count, 16);
    }

    #[test]
    fn query_over_budget_is_an_error() {
        let cfg = PromptConfig {
            max_prompt_tokens: 3,
            ..PromptConfig::default()
        };
        assert!(assemble_similarity_prompt(&[], |_| None, "x = 1;", &cfg, &CodeTokenizer).is_err());
    }

    #[test]
    fn unsorted_results_are_rejected() {
        let units = [unit(1, "a"), unit(2, "b")];
        let find = |id| units.iter().find(|u| u.id == id);
        let r = assemble_similarity_prompt(&[hit(1, 0.1, 1), hit(2, 0.5, 2)], find, "q", &PromptConfig::default(), &CodeTokenizer);
        assert!(r.is_err());
    }

    #[test]
    fn dependency_order_and_budget() {
        let d1 = unit(1, "int d1 ( ) ;");
        let d2 = unit(2, "int d2 ( ) ;");
        let d3 = unit(3, "int d3 ( ) ;");
        let cfg = PromptConfig::default();
        let b = assemble_dependency_prompt(&[&d1, &d2], "q", &cfg, &CodeTokenizer).unwrap();
        assert_eq!(b.prompt_text, "int d2 ( ) ;\n\nint d1 ( ) ;\n\nq");
        let empty = assemble_dependency_prompt(&[], "q", &cfg, &CodeTokenizer).unwrap();
        assert_eq!(empty.prompt_text, "q");
        // each def 5 tokens + 2 separator tokens; query 1 -> two defs need 15
        let tight = PromptConfig {
            max_prompt_tokens: 15,
            ..cfg
        };
        let b = assemble_dependency_prompt(&[&d1, &d2, &d3], "q", &tight, &CodeTokenizer).unwrap();
        assert_eq!(b.prompt_text, "int d2 ( ) ;\n\nint d1 ( ) ;\n\nq");
        assert!(b.truncated);
    }

    #[test]
    fn source_headers() {
        let u = unit(1, "int a;");
        let cfg = PromptConfig {
            include_source_header: true,
            ..PromptConfig::default()
        };
        let b = assemble_dependency_prompt(&[&u], "q", &cfg, &CodeTokenizer).unwrap();
        assert_eq!(b.prompt_text, "// lib/u1.cc\nint a;\n\nq");
    }

    #[test]
    fn additivity_with_separator() {
        let (a, b, sep) = ("int f(int x) { return x; }", "y = f(2);", "\n\n");
        let joined = format!("{a}{sep}{b}");
        assert_eq!(
            count_tokens(&CodeTokenizer, &joined) - count_tokens(&CodeTokenizer, a) - count_tokens(&CodeTokenizer, b),
            count_tokens(&CodeTokenizer, sep)
        );
        assert_eq!(count_tokens(&CodeTokenizer, ""), 0);
    }
}
