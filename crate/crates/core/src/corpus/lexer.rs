//! Line-oriented C/C++ comment scanner.
//!
//! Splits every source line into its code part and its comment part while
//! tracking block comments and string/char literals across lines. Used by the
//! comment-ratio filter and by the comment-only target rule.

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LineParts {
    pub code: String,
    pub comment: String,
}

impl LineParts {
    /// True when the line carries comment text and nothing else.
    pub fn is_comment_only(&self) -> bool {
        self.code.trim().is_empty() && !self.comment.trim().is_empty()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Code,
    Block,
    Literal(char),
}

/// Scans `content` line by line (same line split as [`str::lines`]).
pub fn scan(content: &str) -> Vec<LineParts> {
    let mut state = State::Code;
    let mut out = Vec::new();
    for line in content.lines() {
        let mut parts = LineParts::default();
        let mut chars = line.chars().peekable();
        while let Some(c) = chars.next() {
            match state {
                State::Code => match c {
                    '/' if chars.peek() == Some(&'/') => {
                        chars.next();
                        parts.comment.push_str("//");
                        parts.comment.extend(chars.by_ref());
                    }
                    '/' if chars.peek() == Some(&'*') => {
                        chars.next();
                        parts.comment.push_str("/*");
                        state = State::Block;
                    }
                    '"' | '\'' => {
                        parts.code.push(c);
                        state = State::Literal(c);
                    }
                    _ => parts.code.push(c),
                },
                State::Block => {
                    parts.comment.push(c);
                    if c == '*' && chars.peek() == Some(&'/') {
                        chars.next();
                        parts.comment.push('/');
                        state = State::Code;
                    }
                }
                State::Literal(q) => {
                    parts.code.push(c);
                    if c == '\\' {
                        if let Some(n) = chars.next() {
                            parts.code.push(n);
                        }
                    } else if c == q {
                        state = State::Code;
                    }
                }
            }
        }
        // unterminated literals do not continue onto the next line
        if let State::Literal(_) = state {
            state = State::Code;
        }
        out.push(parts);
    }
    out
}

/// All comment text of a file, concatenated.
pub fn comment_text(content: &str) -> String {
    scan(content).into_iter().map(|p| p.comment).collect()
}
