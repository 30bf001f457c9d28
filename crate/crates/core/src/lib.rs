//! Syntactically supervised two-stage Transformer decoding.
//!
//! A parse decoder emits a short sequence of chunk identifiers (a
//! constituent label plus the number of tokens it covers), and a token
//! decoder fills every chunk in a single non-autoregressive pass. Vanilla
//! autoregressive and semi-autoregressive baselines share the same encoder
//! and tensor library.

pub mod bench;
pub mod data;
pub mod error;
pub mod eval;
pub mod rng;
pub mod subword;
pub mod tensor;
pub mod treebank;

pub mod models;

pub use error::{Error, Result};
