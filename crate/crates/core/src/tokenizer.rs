//! Token accounting for prompts, benchmark contexts and training blocks.
//!
//! The default [`CodeTokenizer`] splits text into identifiers, numbers,
//! single punctuation characters and individual newlines. Spaces and tabs
//! separate tokens but are not tokens themselves, so counts are additive
//! across any whitespace-containing separator.

use std::collections::HashMap;

/// One token borrowed from the source text, with its byte offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Piece<'a> {
    pub text: &'a str,
    pub start: usize,
}

pub trait Tokenizer: Send + Sync {
    /// Identifier recorded in store headers so that counts are never mixed
    /// across tokenizers.
    fn id(&self) -> &str;

    fn pieces<'a>(&self, text: &'a str) -> Vec<Piece<'a>>;

    fn count(&self, text: &str) -> usize {
        self.pieces(text).len()
    }

    fn tokens<'a>(&self, text: &'a str) -> Vec<&'a str> {
        self.pieces(text).into_iter().map(|p| p.text).collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CodeTokenizer;

impl CodeTokenizer {
    pub const ID: &'static str = "code-v1";
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

impl Tokenizer for CodeTokenizer {
    fn id(&self) -> &str {
        Self::ID
    }

    fn pieces<'a>(&self, text: &'a str) -> Vec<Piece<'a>> {
        let mut out = Vec::new();
        let mut iter = text.char_indices().peekable();
        while let Some((start, c)) = iter.next() {
            if c == '\n' {
                out.push(Piece { text: &text[start..start + 1], start });
                continue;
            }
            if c.is_whitespace() {
                continue;
            }
            let mut end = start + c.len_utf8();
            if is_ident_start(c) {
                while let Some(&(i, n)) = iter.peek() {
                    if !is_ident_continue(n) {
                        break;
                    }
                    end = i + n.len_utf8();
                    iter.next();
                }
            } else if c.is_ascii_digit() {
                // 0x1F, 1.5f, 10'000 style literals stay in one token (except the quote)
                while let Some(&(i, n)) = iter.peek() {
                    if !(is_ident_continue(n) || n == '.') {
                        break;
                    }
                    end = i + n.len_utf8();
                    iter.next();
                }
            }
            out.push(Piece { text: &text[start..end], start });
        }
        out
    }
}

/// First-seen interning of token strings to dense ids.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    ids: HashMap<String, u32>,
    tokens: Vec<String>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.ids.insert(token.to_string(), id);
        self.tokens.push(token.to_string());
        id
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens in id order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { ids, tokens }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_has_no_tokens() {
        assert_eq!(CodeTokenizer.count(""), 0);
        assert_eq!(CodeTokenizer.count("   \t "), 0);
    }

    #[test]
    fn hand_tokenized_line() {
        let toks = CodeTokenizer.tokens("  if (x_1 >= 0x1F) return foo.bar(2.5f);");
        assert_eq!(
            toks,
            vec![
                "if", "(", "x_1", ">", "=", "0x1F", ")", "return", "foo", ".", "bar", "(", "2.5f",
                ")", ";"
            ]
        );
    }

    #[test]
    fn newlines_are_tokens() {
        assert_eq!(CodeTokenizer.tokens("a\n\nb"), vec!["a", "\n", "\n", "b"]);
    }

    #[test]
    fn additive_over_separator() {
        let a = "int f() { return g(1); }";
        let b = "x = y + 2;\nz++;";
        for sep in ["\n\n", "\n", " ", "\n// --\n"] {
            let joined = format!("{a}{sep}{b}");
            assert_eq!(
                CodeTokenizer.count(&joined) - CodeTokenizer.count(a) - CodeTokenizer.count(b),
                CodeTokenizer.count(sep),
                "separator {sep:?}"
            );
        }
    }

    #[test]
    fn piece_offsets_point_into_source() {
        let text = "αβ = x;\n";
        for p in CodeTokenizer.pieces(text) {
            assert_eq!(&text[p.start..p.start + p.text.len()], p.text);
        }
    }

    #[test]
    fn vocab_interns_first_seen() {
        let mut v = Vocab::new();
        assert_eq!(v.intern("a"), 0);
        assert_eq!(v.intern("b"), 1);
        assert_eq!(v.intern("a"), 0);
        assert_eq!(v.token(1), Some("b"));
        let back = Vocab::from_tokens(v.tokens().to_vec());
        assert_eq!(back.get("b"), Some(1));
    }
}
