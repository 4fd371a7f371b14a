//! Prefix/completion examples in token-string and encoded form.

use crate::vocab::{Sequence, TokenId, Vocab, VocabError};

/// A conditioning prefix and its target completion, as token strings.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Example {
    pub prefix: Vec<String>,
    pub completion: Vec<String>,
}

impl Example {
    pub fn new(prefix: Vec<String>, completion: Vec<String>) -> Self {
        Self { prefix, completion }
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.prefix.iter().chain(&self.completion).map(String::as_str)
    }

    pub fn encode(&self, vocab: &Vocab) -> Result<EncodedExample, VocabError> {
        Ok(EncodedExample {
            prefix: vocab.encode(&self.prefix)?,
            completion: vocab.encode(&self.completion)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedExample {
    pub prefix: Sequence,
    pub completion: Sequence,
}

impl EncodedExample {
    /// Training targets: prefix, completion, then EOS.
    pub fn full_sequence(&self) -> Sequence {
        let mut ids: Vec<TokenId> = Vec::with_capacity(self.prefix.len() + self.completion.len() + 1);
        ids.extend_from_slice(&self.prefix);
        ids.extend_from_slice(&self.completion);
        ids.push(Vocab::EOS);
        Sequence(ids)
    }
}
