//! Codebase preparation: ingestion and filtering, segmentation into
//! retrieval units, benchmark construction and training-block packing.

mod benchmark;
mod blocks;
mod filter;
pub mod lexer;
mod segment;

use serde::{Deserialize, Serialize};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;

pub use benchmark::{is_single_symbol, make_benchmark, Benchmark, BenchmarkStats, Sample};
pub use blocks::{pack_training_blocks, TrainingBlock, TrainingBlocks};
pub use filter::{ingest, FilterConfig, FilterReport, GeneratedMarker};
pub use segment::{segment, segment_all};

pub const FILE_STORE: &str = "files";
pub const UNIT_STORE: &str = "units";
pub const BENCHMARK_STORE: &str = "benchmark";
pub const BLOCK_STORE: &str = "training_blocks";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub path: String,
    pub content: String,
    pub line_count: usize,
    pub token_count: usize,
    pub content_hash: u64,
}

impl SourceFile {
    pub fn new(path: impl Into<String>, content: impl Into<String>, tok: &dyn Tokenizer) -> Self {
        let content = content.into();
        Self {
            path: path.into(),
            line_count: content.lines().count(),
            token_count: tok.count(&content),
            content_hash: content_hash(&content),
            content,
        }
    }

    /// Lines `start..=end` (1-based, inclusive) joined with `\n`.
    pub fn line_slice(&self, start: usize, end: usize) -> String {
        line_slice(&self.content, start, end)
    }
}

pub(crate) fn line_slice(content: &str, start: usize, end: usize) -> String {
    debug_assert!(start >= 1 && start <= end);
    content
        .lines()
        .skip(start - 1)
        .take(end + 1 - start)
        .collect::<Vec<_>>()
        .join("\n")
}

/// 64-bit hash of whitespace-normalized content: runs of whitespace collapse
/// to one space and the ends are trimmed.
pub fn content_hash(content: &str) -> u64 {
    let normalized = content.split_whitespace().collect::<Vec<_>>().join(" ");
    let digest = Sha256::digest(normalized.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Function,
    Class,
    WholeFile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalUnit {
    pub id: u32,
    pub source_path: String,
    pub kind: UnitKind,
    pub name: Option<String>,
    pub start_line: usize,
    pub end_line: usize,
    pub content: String,
    pub token_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionInstance {
    pub id: u32,
    pub source_path: String,
    /// Line number (1-based) of the first context line.
    pub start_line: usize,
    pub context: String,
    pub target: String,
    pub context_token_count: usize,
}

/// Splits `files` into (kept, holdout). The holdout is the first
/// `⌈fraction · n⌉` files of a seeded shuffle; both halves stay path-sorted.
pub fn split_holdout(files: Vec<SourceFile>, fraction: f64, seed: u64) -> Result<(Vec<SourceFile>, Vec<SourceFile>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("holdout fraction {fraction} is outside (0, 1)")));
    }
    let n = files.len();
    let take = (fraction * n as f64).ceil() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let held: std::collections::HashSet<usize> = order[..take.min(n)].iter().copied().collect();
    let (mut holdout, mut kept) = (Vec::new(), Vec::new());
    for (i, f) in files.into_iter().enumerate() {
        if held.contains(&i) {
            holdout.push(f);
        } else {
            kept.push(f);
        }
    }
    Ok((kept, holdout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::CodeTokenizer;

    #[test]
    fn hash_ignores_whitespace_layout() {
        assert_eq!(content_hash("int  x;\n\n y;"), content_hash("int x; y;\n"));
    }

    #[test]
    fn holdout_split_is_disjoint_and_seeded() {
        let files: Vec<SourceFile> = (0..10).map(|i| SourceFile::new(format!("f{i}.cpp"), format!("int v{i};"), &CodeTokenizer)).collect();
        let (kept, held) = split_holdout(files.clone(), 0.25, 3).unwrap();
        assert_eq!((kept.len(), held.len()), (7, 3));
        assert!(held.iter().all(|h| !kept.contains(h)));
        assert_eq!(split_holdout(files.clone(), 0.25, 3).unwrap().1, held);
        assert!(split_holdout(files, 1.0, 3).is_err());
        assert_ne!(content_hash("int x;"), content_hash("int y;"));
    }

    #[test]
    fn line_slice_is_inclusive() {
        let f = SourceFile::new("a.cc", "l1\nl2\nl3\n", &CodeTokenizer);
        assert_eq!(f.line_count, 3);
        assert_eq!(f.line_slice(2, 3), "l2\nl3");
        assert_eq!(f.line_slice(1, 1), "l1");
    }
}
