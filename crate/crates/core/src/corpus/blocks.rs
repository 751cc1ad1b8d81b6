use serde::{Deserialize, Serialize};

use super::SourceFile;
use crate::error::{Error, Result};
use crate::tokenizer::{Tokenizer, Vocab};

/// One fixed-length training sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingBlock {
    pub tokens: Vec<u32>,
    /// Byte range of the block in the path-ordered concatenation of all files.
    pub origin: (u64, u64),
}

#[derive(Debug, Clone)]
pub struct TrainingBlocks {
    pub block_len: usize,
    pub blocks: Vec<TrainingBlock>,
    /// Total tokens in the corpus stream, including the dropped tail.
    pub stream_len: usize,
    pub vocab: Vocab,
}

/// Tokenizes files in path order into one stream and cuts it into
/// consecutive, non-overlapping blocks of exactly `block_len` tokens. The
/// remainder shorter than `block_len` is dropped.
pub fn pack_training_blocks(
    files: &[SourceFile],
    block_len: usize,
    tok: &dyn Tokenizer,
) -> Result<TrainingBlocks> {
    if block_len < 2 {
        return Err(Error::invalid("block length must be at least 2"));
    }
    let mut order: Vec<&SourceFile> = files.iter().collect();
    order.sort_by(|a, b| a.path.cmp(&b.path));

    let mut vocab = Vocab::new();
    let mut ids = Vec::new();
    let mut spans = Vec::new();
    let mut offset = 0u64;
    for f in order {
        for p in tok.pieces(&f.content) {
            ids.push(vocab.intern(p.text));
            let start = offset + p.start as u64;
            spans.push((start, start + p.text.len() as u64));
        }
        offset += f.content.len() as u64;
    }

    let blocks = ids
        .chunks_exact(block_len)
        .zip(spans.chunks_exact(block_len))
        .map(|(tokens, span)| TrainingBlock {
            tokens: tokens.to_vec(),
            origin: (span[0].0, span[block_len - 1].1),
        })
        .collect();
    Ok(TrainingBlocks {
        block_len,
        blocks,
        stream_len: ids.len(),
        vocab,
    })
}
