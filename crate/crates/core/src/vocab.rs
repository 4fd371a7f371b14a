//! Token vocabulary and id sequences.
//!
//! Every pipeline in the workspace operates on whitespace-free token strings
//! mapped to dense integer ids. Six reserved tokens always occupy ids 0..6 so
//! that a vocabulary file is stable across save/load and across tasks.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::ops::Deref;
use std::path::Path;

use thiserror::Error;

pub type TokenId = u32;

/// Opens a lookahead span.
pub const T_OPEN: &str = "<T>";
/// Closes a lookahead span.
pub const T_CLOSE: &str = "</T>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const PAD: &str = "<pad>";
pub const SEP: &str = "<sep>";

/// Reserved tokens in id order.
pub const RESERVED: [&str; 6] = [T_OPEN, T_CLOSE, BOS, EOS, PAD, SEP];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("reserved token {0:?} appears in corpus data")]
    ReservedInCorpus(String),
    #[error("invalid token {0:?}: tokens must be non-empty and contain no whitespace")]
    InvalidToken(String),
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: TokenId, size: usize },
    #[error("malformed vocabulary file: {0}")]
    Malformed(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Bijective token <-> id mapping with reserved ids at the front.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    entries: Vec<String>,
    ids: HashMap<String, TokenId>,
}

impl Vocab {
    pub const T_OPEN: TokenId = 0;
    pub const T_CLOSE: TokenId = 1;
    pub const BOS: TokenId = 2;
    pub const EOS: TokenId = 3;
    pub const PAD: TokenId = 4;
    pub const SEP: TokenId = 5;
    pub const NUM_RESERVED: usize = RESERVED.len();

    /// Builds a vocabulary from token streams: reserved tokens first, then
    /// every other token in first-seen order.
    pub fn build<I, S, T>(corpora: I) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        let mut vocab = Self::reserved_only();
        for stream in corpora {
            for tok in stream {
                let tok = tok.as_ref();
                if RESERVED.contains(&tok) {
                    return Err(VocabError::ReservedInCorpus(tok.to_string()));
                }
                vocab.insert(tok)?;
            }
        }
        Ok(vocab)
    }

    fn reserved_only() -> Self {
        let entries: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let ids = entries
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as TokenId))
            .collect();
        Self { entries, ids }
    }

    fn insert(&mut self, tok: &str) -> Result<TokenId, VocabError> {
        if let Some(&id) = self.ids.get(tok) {
            return Ok(id);
        }
        if tok.is_empty() || tok.chars().any(char::is_whitespace) {
            return Err(VocabError::InvalidToken(tok.to_string()));
        }
        let id = self.entries.len() as TokenId;
        self.entries.push(tok.to_string());
        self.ids.insert(tok.to_string(), id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, tok: &str) -> Option<TokenId> {
        self.ids.get(tok).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn is_reserved(id: TokenId) -> bool {
        (id as usize) < Self::NUM_RESERVED
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Sequence, VocabError> {
        tokens
            .iter()
            .map(|t| {
                let t = t.as_ref();
                self.id(t).ok_or_else(|| VocabError::UnknownToken(t.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Sequence)
    }

    pub fn decode(&self, seq: &[TokenId]) -> Result<Vec<String>, VocabError> {
        seq.iter()
            .map(|&id| {
                self.token(id).map(str::to_string).ok_or(VocabError::IdOutOfRange {
                    id,
                    size: self.len(),
                })
            })
            .collect()
    }

    /// One token per line, reserved tokens on lines 0..6.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(e);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, VocabError> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < Self::NUM_RESERVED {
            return Err(VocabError::Malformed(format!(
                "expected at least {} lines, found {}",
                Self::NUM_RESERVED,
                lines.len()
            )));
        }
        for (i, want) in RESERVED.iter().enumerate() {
            if lines[i] != *want {
                return Err(VocabError::Malformed(format!(
                    "line {i} must be {want:?}, found {:?}",
                    lines[i]
                )));
            }
        }
        let mut vocab = Self::reserved_only();
        for (i, line) in lines.iter().enumerate().skip(Self::NUM_RESERVED) {
            if vocab.ids.contains_key(*line) {
                return Err(VocabError::Malformed(format!("duplicate token {line:?} on line {i}")));
            }
            vocab.insert(line)?;
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<(), VocabError> {
        fs::write(path, self.to_text()).map_err(|e| VocabError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, VocabError> {
        let text = fs::read_to_string(path).map_err(|e| VocabError::Io(e.to_string()))?;
        Self::from_text(&text)
    }
}

/// A sequence of token ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Sequence(pub Vec<TokenId>);

impl Sequence {
    pub fn new(ids: Vec<TokenId>) -> Self {
        Self(ids)
    }

    pub fn into_inner(self) -> Vec<TokenId> {
        self.0
    }
}

impl Deref for Sequence {
    type Target = [TokenId];

    fn deref(&self) -> &[TokenId] {
        &self.0
    }
}

impl From<Vec<TokenId>> for Sequence {
    fn from(ids: Vec<TokenId>) -> Self {
        Self(ids)
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, id) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{id}")?;
        }
        Ok(())
    }
}

/// Splits text into tokens: digit runs, identifier runs, reserved specials,
/// and single punctuation characters. Whitespace only separates.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    'outer: while i < text.len() {
        let c = text[i..].chars().next().unwrap();
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        if c == '<' {
            for r in RESERVED {
                if text[i..].starts_with(r) {
                    out.push(r.to_string());
                    i += r.len();
                    continue 'outer;
                }
            }
        }
        let start = i;
        if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
        } else {
            i += c.len_utf8();
        }
        out.push(text[start..i].to_string());
    }
    out
}

/// How a token list is turned back into display text.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TextStyle {
    /// Tokens concatenated with no separator (`3,8|8,1/3,1=`).
    Compact,
    /// Space separated, except no space after `[` and none before `]`, `,`
    /// or `:` (`A: [[0 1], [1 0]]`).
    Spaced,
}

pub fn render<S: AsRef<str>>(tokens: &[S], style: TextStyle) -> String {
    let mut out = String::new();
    let mut prev: Option<&str> = None;
    for tok in tokens {
        let tok = tok.as_ref();
        if let (TextStyle::Spaced, Some(p)) = (style, prev) {
            let glue = p == "[" || matches!(tok, "]" | "," | ":");
            if !glue {
                out.push(' ');
            }
        }
        out.push_str(tok);
        prev = Some(tok);
    }
    out
}
