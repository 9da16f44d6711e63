//! BERT-style encoder: token embeddings plus positions, post-norm
//! self-attention blocks, an MLM projection and per-task classifiers.

pub mod attention;
mod config;
mod encoder;
mod params;
pub mod positional;

pub use attention::{multi_head_attention, scaled_dot_attention};
pub use config::{ModelConfig, PositionalMode};
pub use encoder::{
    argmax, classify, classify_on_tape, encode_on_tape, encoder_forward, encoder_forward_batch, mlm_logits,
    mlm_logits_on_tape, predict, BoundParams, Prediction,
};
pub use params::{ClassifierHead, LayerParams, ModelParams};
pub use positional::positional_encoding;
