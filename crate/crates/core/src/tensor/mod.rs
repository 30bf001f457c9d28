//! Dense tensors, reverse-mode autodiff and Transformer layers.

pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod mask;
pub mod nn;
pub mod optim;
pub mod params;
pub mod scalar;
#[allow(clippy::module_inception)]
pub mod tensor;

pub use gradcheck::{grad_check, grad_check_training, relative_error, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use kernels::{AttnSegment, LAYER_NORM_EPS, MASK_VALUE};
pub use mask::{AttentionMask, MaskKind};
pub use nn::{sinusoidal_positions, Embedding, FeedForward, LayerNorm, Linear, MultiHeadAttention};
pub use optim::{Adam, AdamConfig, NoamSchedule};
pub use params::{ParamId, ParamStore, INIT_GAIN};
pub use scalar::Scalar;
pub use tensor::Tensor;
