//! A compact neural toolkit on top of `candle-core`: parameter storage,
//! transformer layers, losses, AdamW and the shared training loop.
//!
//! Everything runs on the CPU in `f32`. Parameters are initialized from a
//! seeded generator so that training runs are reproducible.

mod encoder;
mod layers;
pub mod ops;
mod optim;
mod params;
mod train;
mod vocab;

pub use encoder::{EncoderSpec, TextEncoder};
pub use layers::{
    causal_mask, padding_mask, DecoderLayer, Embedding, EncoderLayer, FeedForward, LayerNorm,
    Linear, MultiHeadAttention,
};
pub use optim::{AdamW, AdamWConfig, EarlyStopping};
pub use params::{Init, ParamStore};
pub use train::{fit, EpochLog, TrainConfig, TrainLog};
pub use vocab::{pad_batch, Vocab, BOS, CLS, EOS, PAD, SEP, UNK};

use candle_core::Device;

pub fn device() -> Device {
    Device::Cpu
}
