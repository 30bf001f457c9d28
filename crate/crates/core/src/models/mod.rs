//! Vanilla autoregressive, semi-autoregressive and syntactically supervised
//! Transformers: training losses, decoding and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod model;
pub mod train;
pub mod transformer;

pub use config::{ModelConfig, System, TrainMode};
pub use model::{batch_loss, check_example, expand_chunk_ids, expand_chunks, shifted_input, Architecture, Example, Expanded, LossVars, Model};
pub use transformer::{Decoder, DecoderCache, Dims, Encoder, Packed};
pub use decode::{expected_passes, length_penalty, top_products, DecodeOptions, DecodeResult};
pub use train::{epoch_batches, StepReport, Trainer};
