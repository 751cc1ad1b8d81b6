use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{lexer, CompletionInstance, SourceFile};
use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;

/// Uniform sampling without replacement over the filtered candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkStats {
    /// Every (context, target) window before target filtering.
    pub candidates: usize,
    pub removed_empty: usize,
    pub removed_single_symbol: usize,
    pub removed_comment: usize,
    /// Candidates that passed the target filters.
    pub eligible: usize,
    pub sampled: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Benchmark {
    pub window: usize,
    pub stride: usize,
    pub instances: Vec<CompletionInstance>,
    pub stats: BenchmarkStats,
}

/// A target "contains only a single symbol": after trimming it is at most one
/// character long or made entirely of punctuation (`}`, `};`, `});`).
pub fn is_single_symbol(line: &str) -> bool {
    let t = line.trim();
    t.chars().count() <= 1 || t.chars().all(|c| c.is_ascii_punctuation())
}

/// Slides a `window`-line context over each file; the target is the line
/// right after the context.
///
/// Candidate ids follow (path, line) order and survive sampling, so the same
/// `(count, seed)` always selects the same id set.
pub fn make_benchmark(
    files: &[SourceFile],
    window: usize,
    stride: usize,
    sample: Option<Sample>,
    tok: &dyn Tokenizer,
) -> Result<Benchmark> {
    if window == 0 || stride == 0 {
        return Err(Error::invalid("window and stride must be at least 1"));
    }
    let mut order: Vec<&SourceFile> = files.iter().collect();
    order.sort_by(|a, b| a.path.cmp(&b.path));

    let mut stats = BenchmarkStats::default();
    let mut eligible = Vec::new();
    for file in order {
        let lines: Vec<&str> = file.content.lines().collect();
        if lines.len() < window + 1 {
            continue;
        }
        let parts = lexer::scan(&file.content);
        let mut start = 0;
        while start + window < lines.len() {
            stats.candidates += 1;
            let t = start + window;
            let target = lines[t];
            if target.trim().is_empty() {
                stats.removed_empty += 1;
            } else if parts[t].is_comment_only() {
                stats.removed_comment += 1;
            } else if is_single_symbol(target) {
                stats.removed_single_symbol += 1;
            } else {
                let context = lines[start..t].join("\n");
                eligible.push(CompletionInstance {
                    id: eligible.len() as u32,
                    source_path: file.path.clone(),
                    start_line: start + 1,
                    context_token_count: tok.count(&context),
                    context,
                    target: target.to_string(),
                });
            }
            start += stride;
        }
    }
    stats.eligible = eligible.len();

    let instances = match sample {
        None => eligible,
        Some(s) if s.count > eligible.len() => {
            return Err(Error::invalid(format!(
                "sample of {} exceeds the {} eligible instances",
                s.count,
                eligible.len()
            )))
        }
        Some(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            let mut picked = rand::seq::index::sample(&mut rng, eligible.len(), s.count).into_vec();
            picked.sort_unstable();
            let mut slots: Vec<Option<CompletionInstance>> = eligible.into_iter().map(Some).collect();
            picked
                .into_iter()
                .map(|i| slots[i].take().expect("indices are distinct"))
                .collect()
        }
    };
    stats.sampled = instances.len();
    Ok(Benchmark {
        window,
        stride,
        instances,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::CodeTokenizer;

    fn numbered(n: usize) -> SourceFile {
        let content: String = (1..=n).map(|i| format!("int v{i} = {i};\n")).collect();
        SourceFile::new("f.cc", content, &CodeTokenizer)
    }

    #[test]
    fn twenty_five_lines_give_five_instances() {
        let b = make_benchmark(&[numbered(25)], 20, 1, None, &CodeTokenizer).unwrap();
        assert_eq!(b.instances.len(), 5);
        assert_eq!(b.instances[0].target, "int v21 = 21;");
        assert_eq!(b.instances[4].target, "int v25 = 25;");
        assert_eq!(b.instances[0].context.lines().count(), 20);
    }

    #[test]
    fn short_file_contributes_nothing() {
        let b = make_benchmark(&[numbered(20)], 20, 1, None, &CodeTokenizer).unwrap();
        assert!(b.instances.is_empty());
        assert_eq!(b.stats.candidates, 0);
    }

    #[test]
    fn brace_and_comment_targets_are_excluded() {
        let mut content: String = (1..=20).map(|i| format!("x{i}();\n")).collect();
        content.push_str("}\n// TODO\n  /* note */\n\nreturn x;\n");
        let f = SourceFile::new("g.cc", content, &CodeTokenizer);
        let b = make_benchmark(&[f], 20, 1, None, &CodeTokenizer).unwrap();
        assert_eq!(b.stats.candidates, 5);
        assert_eq!(b.stats.removed_single_symbol, 1);
        assert_eq!(b.stats.removed_comment, 2);
        assert_eq!(b.stats.removed_empty, 1);
        assert_eq!(b.instances.len(), 1);
        assert_eq!(b.instances[0].target, "return x;");
    }

    #[test]
    fn single_symbol_rule() {
        for s in ["}", "  };", "});", ";", "x", ""] {
            assert!(is_single_symbol(s), "{s:?}");
        }
        for s in ["x++;", "return;", "} else {", "i"] {
            assert_eq!(is_single_symbol(s), s == "i", "{s:?}");
        }
    }

    #[test]
    fn stride_skips_windows() {
        let b = make_benchmark(&[numbered(30)], 20, 3, None, &CodeTokenizer).unwrap();
        // starts 0,3,6,9 fit; 12 would need line 33
        assert_eq!(b.instances.iter().map(|i| i.start_line).collect::<Vec<_>>(), vec![1, 4, 7, 10]);
    }

    #[test]
    fn targets_follow_context() {
        let f = numbered(40);
        let b = make_benchmark(std::slice::from_ref(&f), 20, 1, None, &CodeTokenizer).unwrap();
        for inst in &b.instances {
            let next = inst.start_line + 20;
            assert_eq!(inst.target, f.line_slice(next, next));
            assert_eq!(inst.context, f.line_slice(inst.start_line, next - 1));
        }
    }

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let files = [numbered(80)];
        let s = Some(Sample { count: 10, seed: 7 });
        let a = make_benchmark(&files, 20, 1, s, &CodeTokenizer).unwrap();
        let b = make_benchmark(&files, 20, 1, s, &CodeTokenizer).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.instances.len(), 10);
        assert!(a.instances.windows(2).all(|w| w[0].id < w[1].id));
        let c = make_benchmark(&files, 20, 1, Some(Sample { count: 10, seed: 8 }), &CodeTokenizer).unwrap();
        assert_ne!(a.instances, c.instances);
        let too_many = Some(Sample { count: 61, seed: 1 });
        assert!(make_benchmark(&files, 20, 1, too_many, &CodeTokenizer).is_err());
    }

    #[test]
    fn zero_window_is_rejected() {
        assert!(make_benchmark(&[numbered(5)], 0, 1, None, &CodeTokenizer).is_err());
    }
}
