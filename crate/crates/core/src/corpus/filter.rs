use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::{lexer, SourceFile};
use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;

/// Marker identifying auto-generated code, matched case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratedMarker {
    /// Substring of the relative path.
    Path(String),
    /// Substring of the file content.
    Content(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub max_define_body_chars: usize,
    pub max_nonascii_comment_ratio: f64,
    pub generated_code_markers: Vec<GeneratedMarker>,
    /// File extensions (without the dot) that are scanned at all.
    pub extensions: Vec<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        let path = |s: &str| GeneratedMarker::Path(s.to_string());
        let content = |s: &str| GeneratedMarker::Content(s.to_string());
        Self {
            max_define_body_chars: 512,
            max_nonascii_comment_ratio: 0.3,
            generated_code_markers: vec![
                path(".pb.h"),
                path(".pb.cc"),
                path("moc_"),
                path("_generated."),
                path("/generated/"),
                content("@generated"),
                content("do not edit"),
                content("automatically generated"),
                content("auto-generated"),
            ],
            extensions: ["c", "cc", "cpp", "cxx", "h", "hh", "hpp", "hxx", "inl", "ipp"]
                .into_iter()
                .map(String::from)
                .collect(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_define_body_chars == 0 {
            return Err(Error::config("max_define_body_chars must be positive"));
        }
        let r = self.max_nonascii_comment_ratio;
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::config(
                "max_nonascii_comment_ratio must lie in (0, 1]",
            ));
        }
        Ok(())
    }

    fn wants(&self, path: &Path) -> bool {
        path.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| self.extensions.iter().any(|x| x.eq_ignore_ascii_case(e)))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: usize,
    pub removed_duplicate: usize,
    pub removed_generated: usize,
    pub removed_comment_heavy: usize,
    pub removed_long_define: usize,
    pub removed_unreadable: usize,
}

impl FilterReport {
    pub fn scanned(&self) -> usize {
        self.kept
            + self.removed_duplicate
            + self.removed_generated
            + self.removed_comment_heavy
            + self.removed_long_define
            + self.removed_unreadable
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Verdict {
    Keep,
    Generated,
    CommentHeavy,
    LongDefine,
    Unreadable,
}

/// Scans `root` for C-family sources and applies the filtering rules.
///
/// Files come back sorted by relative path. Among files with equal
/// normalized content only the lexicographically smallest path survives.
pub fn ingest(
    root: &Path,
    cfg: &FilterConfig,
    tok: &dyn Tokenizer,
) -> Result<(Vec<SourceFile>, FilterReport)> {
    cfg.validate()?;
    let meta = std::fs::metadata(root).map_err(|e| Error::io(root, e))?;
    if !meta.is_dir() {
        return Err(Error::invalid(format!("{} is not a directory", root.display())));
    }

    let mut paths = Vec::new();
    for entry in WalkDir::new(root).follow_links(false) {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                tracing::warn!("skipping unreadable entry: {e}");
                continue;
            }
        };
        if entry.file_type().is_file() && cfg.wants(entry.path()) {
            paths.push(entry.into_path());
        }
    }

    let mut classified: Vec<(String, Verdict, Option<SourceFile>)> = paths
        .par_iter()
        .map(|abs| {
            let rel = relative_path(root, abs);
            match std::fs::read(abs).map(String::from_utf8) {
                Ok(Ok(content)) => {
                    let verdict = classify(&rel, &content, cfg);
                    let file = (verdict == Verdict::Keep).then(|| SourceFile::new(&rel, content, tok));
                    (rel, verdict, file)
                }
                Ok(Err(_)) => {
                    tracing::warn!("{rel}: not valid UTF-8, skipped");
                    (rel, Verdict::Unreadable, None)
                }
                Err(e) => {
                    tracing::warn!("{rel}: {e}, skipped");
                    (rel, Verdict::Unreadable, None)
                }
            }
        })
        .collect();
    classified.sort_by(|a, b| a.0.cmp(&b.0));

    let mut report = FilterReport::default();
    let mut seen = HashSet::new();
    let mut files = Vec::new();
    for (_, verdict, file) in classified {
        match verdict {
            Verdict::Keep => {
                let file = file.expect("kept files carry content");
                if seen.insert(file.content_hash) {
                    report.kept += 1;
                    files.push(file);
                } else {
                    report.removed_duplicate += 1;
                }
            }
            Verdict::Generated => report.removed_generated += 1,
            Verdict::CommentHeavy => report.removed_comment_heavy += 1,
            Verdict::LongDefine => report.removed_long_define += 1,
            Verdict::Unreadable => report.removed_unreadable += 1,
        }
    }
    Ok((files, report))
}

fn relative_path(root: &Path, abs: &Path) -> String {
    let rel = abs.strip_prefix(root).unwrap_or(abs);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn classify(rel: &str, content: &str, cfg: &FilterConfig) -> Verdict {
    if is_generated(rel, content, &cfg.generated_code_markers) {
        Verdict::Generated
    } else if longest_define_body(content) > cfg.max_define_body_chars {
        Verdict::LongDefine
    } else if nonascii_comment_ratio(content) > cfg.max_nonascii_comment_ratio {
        Verdict::CommentHeavy
    } else {
        Verdict::Keep
    }
}

fn is_generated(rel: &str, content: &str, markers: &[GeneratedMarker]) -> bool {
    let rel = format!("/{}", rel.to_lowercase());
    let mut lowered = None;
    markers.iter().any(|m| match m {
        GeneratedMarker::Path(p) => rel.contains(&p.to_lowercase()),
        GeneratedMarker::Content(c) => lowered
            .get_or_insert_with(|| content.to_lowercase())
            .contains(&c.to_lowercase()),
    })
}

/// Fraction of non-ASCII characters among the non-whitespace characters of
/// all comments; 0 for files without comments.
pub(crate) fn nonascii_comment_ratio(content: &str) -> f64 {
    let text = lexer::comment_text(content);
    let (mut total, mut non_ascii) = (0usize, 0usize);
    for c in text.chars().filter(|c| !c.is_whitespace()) {
        total += 1;
        if !c.is_ascii() {
            non_ascii += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        non_ascii as f64 / total as f64
    }
}

/// Character length of the longest `#define` body, with line continuations
/// joined. The body is everything after the macro name and parameter list.
pub(crate) fn longest_define_body(content: &str) -> usize {
    let mut longest = 0;
    let mut lines = content.lines();
    while let Some(line) = lines.next() {
        let Some(rest) = directive(line, "define") else {
            continue;
        };
        let mut logical = String::from(rest);
        while logical.ends_with('\\') {
            logical.pop();
            match lines.next() {
                Some(next) => logical.push_str(next),
                None => break,
            }
        }
        longest = longest.max(define_body(&logical).chars().count());
    }
    longest
}

fn directive<'a>(line: &'a str, name: &str) -> Option<&'a str> {
    let rest = line.trim_start().strip_prefix('#')?.trim_start();
    let rest = rest.strip_prefix(name)?;
    match rest.chars().next() {
        Some(c) if c.is_whitespace() => Some(rest),
        _ => None,
    }
}

fn define_body(after_define: &str) -> &str {
    let s = after_define.trim_start();
    let name_end = s
        .char_indices()
        .find(|&(_, c)| !(c == '_' || c.is_alphanumeric()))
        .map_or(s.len(), |(i, _)| i);
    let mut body = &s[name_end..];
    if body.starts_with('(') {
        body = body.find(')').map_or("", |i| &body[i + 1..]);
    }
    body.trim()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::CodeTokenizer;
    use std::fs;

    fn tree(files: &[(&str, &[u8])]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for (p, body) in files {
            let path = dir.path().join(p);
            fs::create_dir_all(path.parent().unwrap()).unwrap();
            fs::write(path, body).unwrap();
        }
        dir
    }

    fn ordinary(lines: usize) -> String {
        (0..lines).map(|i| format!("int v{i} = {i};\n")).collect()
    }

    #[test]
    fn duplicates_keep_smallest_path() {
        let body = ordinary(5);
        let dir = tree(&[("b.cc", body.as_bytes()), ("a.cc", body.as_bytes())]);
        let (files, report) = ingest(dir.path(), &FilterConfig::default(), &CodeTokenizer).unwrap();
        assert_eq!(files.len(), 1);
        assert_eq!(files[0].path, "a.cc");
        assert_eq!(report.removed_duplicate, 1);
        assert_eq!(report.kept, 1);
    }

    #[test]
    fn whitespace_only_difference_is_a_duplicate() {
        let dir = tree(&[("a.cc", b"int x;\n"), ("sub/z.cc", b"int   x;\n\n")]);
        let (files, report) = ingest(dir.path(), &FilterConfig::default(), &CodeTokenizer).unwrap();
        assert_eq!(files.len(), 1);
        assert_eq!(report.removed_duplicate, 1);
    }

    #[test]
    fn long_define_is_removed() {
        let body: String = "x".repeat(600);
        // character-count oracle: the body is exactly the 600 x's
        assert_eq!(define_body(&format!(" X {body}")).chars().count(), 600);
        let src = format!("#define X {body}\nint main() {{ return 0; }}\n");
        let dir = tree(&[("m.cc", src.as_bytes())]);
        let (files, report) = ingest(dir.path(), &FilterConfig::default(), &CodeTokenizer).unwrap();
        assert!(files.is_empty());
        assert_eq!(report.removed_long_define, 1);
    }

    #[test]
    fn define_body_lengths() {
        assert_eq!(longest_define_body("#define FOO 1\n"), 1);
        assert_eq!(longest_define_body("#  define F(a, b) ((a) + (b))\n"), 11);
        assert_eq!(longest_define_body("#define G(x) \\\n  do { x; } \\\n  while (0)\n"), 21);
        assert_eq!(longest_define_body("#defined\n#include <x>\n"), 0);
        let at_limit = format!("#define X {}\n", "y".repeat(512));
        assert_eq!(longest_define_body(&at_limit), 512);
        let dir = tree(&[("ok.cc", at_limit.as_bytes())]);
        let (files, _) = ingest(dir.path(), &FilterConfig::default(), &CodeTokenizer).unwrap();
        assert_eq!(files.len(), 1);
    }

    #[test]
    fn ordinary_file_is_kept() {
        let dir = tree(&[("src/plain.cc", ordinary(30).as_bytes())]);
        let (files, report) = ingest(dir.path(), &FilterConfig::default(), &CodeTokenizer).unwrap();
        assert_eq!(files.len(), 1);
        assert_eq!(files[0].line_count, 30);
        assert_eq!(
            report,
            FilterReport {
                kept: 1,
                ..FilterReport::default()
            }
        );
    }

    #[test]
    fn comment_heavy_and_generated_and_unreadable() {
        let dir = tree(&[
            ("cn.cc", "// 这是一个很长的中文注释\nint x;\n".as_bytes()),
            ("en.cc", "// an english comment 中\nint y;\n".as_bytes()),
            ("msg.pb.cc", b"int z;\n"),
            ("gen.h", b"// @generated by tool\nint w;\n"),
            ("bad.cc", &[0xff, 0xfe, 0x00]),
            ("notes.txt", b"ignored"),
        ]);
        let (files, report) = ingest(dir.path(), &FilterConfig::default(), &CodeTokenizer).unwrap();
        assert_eq!(files.iter().map(|f| f.path.as_str()).collect::<Vec<_>>(), ["en.cc"]);
        assert_eq!(report.removed_comment_heavy, 1);
        assert_eq!(report.removed_generated, 2);
        assert_eq!(report.removed_unreadable, 1);
        assert_eq!(report.scanned(), 5);
    }

    #[test]
    fn missing_root_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope");
        assert!(ingest(&missing, &FilterConfig::default(), &CodeTokenizer).is_err());
    }

    #[test]
    fn ingest_is_idempotent() {
        let body = ordinary(4);
        let dir = tree(&[
            ("x/a.cc", body.as_bytes()),
            ("y/a.cc", body.as_bytes()),
            ("z.h", b"void h(int);\n"),
        ]);
        let first = ingest(dir.path(), &FilterConfig::default(), &CodeTokenizer).unwrap();
        let second = ingest(dir.path(), &FilterConfig::default(), &CodeTokenizer).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn config_validation() {
        let ratio = FilterConfig { max_nonascii_comment_ratio: 1.5, ..FilterConfig::default() };
        assert!(ratio.validate().is_err());
        let define = FilterConfig { max_define_body_chars: 0, ..FilterConfig::default() };
        assert!(define.validate().is_err());
    }
}
