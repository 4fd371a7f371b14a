//! Example dataset files: one example per line, `prefix<TAB>completion`.
//!
//! Token mode writes space-joined tokens; text mode writes the rendered task
//! string. Both read back through the same lexer.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::example::Example;
use crate::vocab::{render, tokenize, TextStyle};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileMode {
    Tokens,
    Text(TextStyle),
}

pub fn write_examples<W: Write>(mut w: W, examples: &[Example], mode: FileMode) -> Result<(), DatasetError> {
    for ex in examples {
        let (p, c) = match mode {
            FileMode::Tokens => (ex.prefix.join(" "), ex.completion.join(" ")),
            FileMode::Text(style) => (render(&ex.prefix, style), render(&ex.completion, style)),
        };
        writeln!(w, "{p}\t{c}")?;
    }
    Ok(())
}

pub fn read_examples<R: BufRead>(r: R) -> Result<Vec<Example>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let Some((p, c)) = line.split_once('\t') else {
            return Err(DatasetError::Malformed { line: i + 1, reason: "missing TAB between prefix and completion".into() });
        };
        let ex = Example::new(tokenize(p), tokenize(c));
        if ex.prefix.is_empty() || ex.completion.is_empty() {
            return Err(DatasetError::Malformed { line: i + 1, reason: "empty prefix or completion".into() });
        }
        out.push(ex);
    }
    Ok(out)
}
