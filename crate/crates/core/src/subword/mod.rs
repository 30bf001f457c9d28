//! Byte-pair-encoding learner and codec.

mod bpe;
mod vocab;

pub use bpe::{bpe_train, decode_lenient, decode_words, BpeModel, BpeTrainer, MARKER};
pub use vocab::TokenVocab;
