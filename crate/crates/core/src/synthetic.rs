//! Generated C++ corpora with known retrieval answers.
//!
//! Every line of a generated function uses identifiers unique to that
//! function and line, so a 20-line window matches exactly one unit.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Relative path and content.
pub type GeneratedFile = (String, String);

#[derive(Debug, Clone, PartialEq)]
pub struct CopyOracleFixture {
    /// Retrieval corpus: one copy of every benchmark function.
    pub library: Vec<GeneratedFile>,
    /// Benchmark sources, disjoint files from `library`.
    pub benchmark: Vec<GeneratedFile>,
    /// Retrieval corpus sharing no function with the benchmark.
    pub distractors: Vec<GeneratedFile>,
}

/// A function named `{prefix}{index}` whose lines chain through variables
/// `{prefix}{index}l{line}`.
pub fn chained_function(prefix: &str, index: usize, body_lines: usize, rng: &mut ChaCha8Rng) -> String {
    let v = |j: usize| format!("{prefix}{index}l{j}");
    let mut out = format!("int {prefix}fn{index}(int {}) {{\n", v(0));
    for j in 1..=body_lines {
        let (m, c) = (rng.random_range(2..100), rng.random_range(1..1000));
        out.push_str(&format!("    int {} = {} * {m} + {c};\n", v(j), v(j - 1)));
    }
    out.push_str(&format!("    return {};\n}}\n", v(body_lines)));
    out
}

/// `n_files` benchmark files, their library copies and `n_files`
/// distractor files. Bodies have 25 to 40 lines.
pub fn copy_oracle_fixture(n_files: usize, seed: u64) -> CopyOracleFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fixture = CopyOracleFixture {
        library: Vec::with_capacity(n_files),
        benchmark: Vec::with_capacity(n_files),
        distractors: Vec::with_capacity(n_files),
    };
    for i in 0..n_files {
        let len = rng.random_range(25..=40);
        let f = chained_function("s", i, len, &mut rng);
        fixture.library.push((format!("lib/mod{i:04}.cpp"), format!("// library copy {i}\n{f}")));
        fixture.benchmark.push((format!("app/mod{i:04}.cpp"), f));
        let len = rng.random_range(25..=40);
        fixture
            .distractors
            .push((format!("other/d{i:04}.cpp"), chained_function("d", i, len, &mut rng)));
    }
    fixture
}

/// `n` space-separated identifiers, which is `n` tokens under the code
/// tokenizer.
pub fn fixed_token_text(prefix: &str, n: usize) -> String {
    (0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(" ")
}

/// Writes `files` under `root`, creating directories.
pub fn write_tree(root: &Path, files: &[GeneratedFile]) -> Result<()> {
    for (rel, content) in files {
        if Path::new(rel).is_absolute() || rel.split('/').any(|c| c == "..") {
            return Err(Error::invalid(format!("{rel} escapes the tree root")));
        }
        let path = root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
