//! Deterministic numeric kernel: matrices, reverse-mode differentiation,
//! transformer blocks, gradient checking and the AdamW optimizer.

pub mod gradcheck;
pub mod graph;
pub mod matrix;
pub mod nn;
pub mod optim;
pub mod store;

pub use gradcheck::{gradient_check, gradient_check_strided, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use matrix::Matrix;
pub use nn::{
    ffn, multi_head_attention, multi_head_attention_with, transformer_layer, AttentionMasks, AttentionOptions,
    AttentionParams, BinaryMask, FfnParams, LayerNormParams, LayerParams, ParamSet,
};
pub use optim::{adamw_step, AdamWConfig, LrSchedule, OptimizerState};
