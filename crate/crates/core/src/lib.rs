//! Synthetic planning tasks and lookahead-span data augmentation.
//!
//! The crate covers everything upstream of the model: the token vocabulary,
//! star-graph and strongly-connected-components task generators with their
//! brute-force checkers, and the `<T> .. </T>` augmentation schemas with
//! their loss masks.

pub mod augment;
pub mod dataset;
pub mod example;
pub mod kv;
pub mod scc;
pub mod seed;
pub mod stargraph;
pub mod task;
pub mod vocab;

pub use augment::{AugSpec, AugmentedSequence, LossScope, Policy, Schema, Span};
pub use example::{EncodedExample, Example};
pub use task::{Instance, TaskSpec};
pub use vocab::{Sequence, TokenId, Vocab};
