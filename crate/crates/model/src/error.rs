use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("sequence length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token id {id} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("batch shape mismatch: {0}")]
    Shape(String),
    #[error("loss mask selects no targets")]
    EmptyMask,
    #[error("non-finite loss {loss} on a batch of {rows} rows x {seq_len} positions ({targets} unmasked targets)")]
    NonFiniteLoss { loss: f64, rows: usize, seq_len: usize, targets: usize },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
