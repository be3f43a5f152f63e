//! Character tokenizer and micro-transformer encoder.

pub mod model;
pub mod persist;
pub mod vocab;

pub use model::{
    cls_vector, encode, encode_graph, encode_masked, encode_traced, mean_pool, mean_pool_graph, EncodedSequence,
    Encoder, EncoderConfig, EncoderVars,
};
pub use vocab::{tokenize, TokenSequence, Vocabulary};
