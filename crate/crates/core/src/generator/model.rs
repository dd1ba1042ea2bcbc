//! Transformer encoder-decoder with a shared token embedding.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{causal_mask, padding_mask, DecoderLayer, Embedding, EncoderLayer, LayerNorm, Linear, ParamStore};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seq2SeqSpec {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
}

impl Default for Seq2SeqSpec {
    fn default() -> Self {
        Seq2SeqSpec {
            dim: 64,
            layers: 2,
            heads: 4,
            ff_dim: 128,
        }
    }
}

impl Seq2SeqSpec {
    pub fn tiny() -> Self {
        Seq2SeqSpec {
            dim: 32,
            layers: 2,
            heads: 4,
            ff_dim: 64,
        }
    }
}

pub struct Seq2Seq {
    tokens: Embedding,
    enc_positions: Embedding,
    dec_positions: Embedding,
    encoder: Vec<EncoderLayer>,
    decoder: Vec<DecoderLayer>,
    enc_ln: LayerNorm,
    dec_ln: LayerNorm,
    out: Linear,
}

/// Encoder output and its additive key mask.
pub struct Memory {
    pub states: Tensor,
    pub mask: Tensor,
}

impl Memory {
    /// Repeats row `i` of the memory `n` times, for beam expansion.
    pub fn repeat_row(&self, i: usize, n: usize) -> Result<Memory> {
        let s = self.states.narrow(0, i, 1)?;
        let m = self.mask.narrow(0, i, 1)?;
        Ok(Memory {
            states: Tensor::cat(&vec![s; n], 0)?,
            mask: Tensor::cat(&vec![m; n], 0)?,
        })
    }
}

impl Seq2Seq {
    pub fn new(
        store: &mut ParamStore,
        spec: &Seq2SeqSpec,
        vocab_size: usize,
        max_source_len: usize,
        max_target_len: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if spec.heads == 0 || spec.dim % spec.heads != 0 {
            return Err(Error::Config(format!("dim {} must be a multiple of heads {}", spec.dim, spec.heads)));
        }
        let d = spec.dim;
        Ok(Seq2Seq {
            tokens: Embedding::new(store, "tokens", vocab_size, d, rng)?,
            enc_positions: Embedding::new(store, "encoder.positions", max_source_len, d, rng)?,
            dec_positions: Embedding::new(store, "decoder.positions", max_target_len, d, rng)?,
            encoder: (0..spec.layers)
                .map(|i| EncoderLayer::new(store, &format!("encoder.layer{i}"), d, spec.heads, spec.ff_dim, rng))
                .collect::<Result<Vec<_>>>()?,
            decoder: (0..spec.layers)
                .map(|i| DecoderLayer::new(store, &format!("decoder.layer{i}"), d, spec.heads, spec.ff_dim, rng))
                .collect::<Result<Vec<_>>>()?,
            enc_ln: LayerNorm::new(store, "encoder.ln_final", d, rng)?,
            dec_ln: LayerNorm::new(store, "decoder.ln_final", d, rng)?,
            out: Linear::new(store, "lm_head", d, vocab_size, rng)?,
        })
    }

    fn embed(&self, ids: &Tensor, positions: &Embedding) -> Result<Tensor> {
        let (_, len) = ids.dims2()?;
        if len > positions.count() {
            return Err(Error::Dimension(format!(
                "sequence length {len} exceeds the model's {} positions",
                positions.count()
            )));
        }
        Ok(self
            .tokens
            .forward(ids)?
            .broadcast_add(&positions.rows(len)?.unsqueeze(0)?)?)
    }

    /// `ids`, `mask`: (batch, src_len).
    pub fn encode(&self, ids: &Tensor, mask: &Tensor) -> Result<Memory> {
        let key_mask = padding_mask(mask)?;
        let mut x = self.embed(ids, &self.enc_positions)?;
        for layer in &self.encoder {
            x = layer.forward(&x, Some(&key_mask))?;
        }
        Ok(Memory {
            states: self.enc_ln.forward(&x)?,
            mask: key_mask,
        })
    }

    /// Next-token logits `(batch, tgt_len, vocab)` for decoder inputs `ids`.
    pub fn decode(&self, memory: &Memory, ids: &Tensor) -> Result<Tensor> {
        let (_, len) = ids.dims2()?;
        let causal = causal_mask(len)?;
        let mut x = self.embed(ids, &self.dec_positions)?;
        for layer in &self.decoder {
            x = layer.forward(&x, &causal, &memory.states, Some(&memory.mask))?;
        }
        self.out.forward(&self.dec_ln.forward(&x)?)
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.count()
    }

    pub fn max_target_len(&self) -> usize {
        self.dec_positions.count()
    }
}
