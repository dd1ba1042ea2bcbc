use std::fmt;
use std::str::FromStr;

use candle_core::{Tensor, D};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::layers::{padding_mask, Embedding, EncoderLayer, LayerNorm, Linear};
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Architecture of a bidirectional text encoder.
///
/// Parsed from a preset name (`tiny`, `tiny-b`, `small`) or an explicit
/// `transformer:dim=32,layers=2,heads=4,ff=64,max_len=128` string.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderSpec {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub max_len: usize,
}

impl EncoderSpec {
    pub fn tiny() -> Self {
        EncoderSpec {
            dim: 32,
            layers: 1,
            heads: 4,
            ff_dim: 64,
            max_len: 128,
        }
    }
}

impl FromStr for EncoderSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "tiny" => return Ok(Self::tiny()),
            "tiny-b" => {
                return Ok(EncoderSpec {
                    dim: 48,
                    layers: 2,
                    heads: 4,
                    ff_dim: 96,
                    max_len: 128,
                })
            }
            "small" => {
                return Ok(EncoderSpec {
                    dim: 64,
                    layers: 2,
                    heads: 4,
                    ff_dim: 128,
                    max_len: 512,
                })
            }
            _ => {}
        }
        let Some(params) = s.strip_prefix("transformer:") else {
            return Err(Error::Config(format!(
                "unknown encoder `{s}`: use a preset (tiny, tiny-b, small) or \
                 `transformer:dim=..,layers=..,heads=..,ff=..,max_len=..`"
            )));
        };
        let mut spec = Self::tiny();
        for kv in params.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad encoder parameter `{kv}`")))?;
            let v: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("encoder parameter `{k}` must be an integer")))?;
            match k.trim() {
                "dim" => spec.dim = v,
                "layers" => spec.layers = v,
                "heads" => spec.heads = v,
                "ff" => spec.ff_dim = v,
                "max_len" => spec.max_len = v,
                other => return Err(Error::Config(format!("unknown encoder parameter `{other}`"))),
            }
        }
        if spec.heads == 0 || spec.dim % spec.heads != 0 {
            return Err(Error::Config(format!(
                "encoder dim {} must be a multiple of heads {}",
                spec.dim, spec.heads
            )));
        }
        Ok(spec)
    }
}

impl fmt::Display for EncoderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "transformer:dim={},layers={},heads={},ff={},max_len={}",
            self.dim, self.layers, self.heads, self.ff_dim, self.max_len
        )
    }
}

impl Serialize for EncoderSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for EncoderSpec {
    fn deserialize<D2: Deserializer<'de>>(d: D2) -> std::result::Result<Self, D2::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Token + learned-position embeddings, a stack of encoder blocks and a
/// tanh pooler over the first position.
pub struct TextEncoder {
    spec: EncoderSpec,
    tokens: Embedding,
    positions: Embedding,
    layers: Vec<EncoderLayer>,
    ln_final: LayerNorm,
    pooler: Linear,
}

impl TextEncoder {
    pub fn new(store: &mut ParamStore, prefix: &str, spec: &EncoderSpec, vocab_size: usize, rng: &mut Rng) -> Result<Self> {
        let tokens = Embedding::new(store, &format!("{prefix}.tokens"), vocab_size, spec.dim, rng)?;
        let positions = Embedding::new(store, &format!("{prefix}.positions"), spec.max_len, spec.dim, rng)?;
        let layers = (0..spec.layers)
            .map(|i| EncoderLayer::new(store, &format!("{prefix}.layer{i}"), spec.dim, spec.heads, spec.ff_dim, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(TextEncoder {
            spec: spec.clone(),
            tokens,
            positions,
            layers,
            ln_final: LayerNorm::new(store, &format!("{prefix}.ln_final"), spec.dim, rng)?,
            pooler: Linear::new(store, &format!("{prefix}.pooler"), spec.dim, spec.dim, rng)?,
        })
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    /// Embeds `(batch, len)` ids; returns hidden states `(batch, len, dim)`.
    pub fn hidden(&self, ids: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let (_, len) = ids.dims2()?;
        if len > self.spec.max_len {
            return Err(Error::Dimension(format!(
                "sequence length {len} exceeds encoder max_len {}",
                self.spec.max_len
            )));
        }
        let mut x = self
            .tokens
            .forward(ids)?
            .broadcast_add(&self.positions.rows(len)?.unsqueeze(0)?)?;
        let attn_mask = padding_mask(mask)?;
        for layer in &self.layers {
            x = layer.forward(&x, Some(&attn_mask))?;
        }
        self.ln_final.forward(&x)
    }

    /// Pooled representation `(batch, dim)` of the first position.
    pub fn pool(&self, hidden: &Tensor) -> Result<Tensor> {
        let first = hidden.narrow(1, 0, 1)?.squeeze(1)?;
        Ok(self.pooler.forward(&first)?.tanh()?)
    }

    pub fn pooled(&self, ids: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let h = self.hidden(ids, mask)?;
        self.pool(&h)
    }

    /// Masked mean of hidden states, `(batch, dim)`.
    pub fn mean_pooled(&self, ids: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let h = self.hidden(ids, mask)?;
        let m = mask.unsqueeze(2)?;
        let summed = h.broadcast_mul(&m)?.sum(1)?;
        let counts = mask.sum_keepdim(D::Minus1)?.affine(1.0, 1e-6)?;
        Ok(summed.broadcast_div(&counts)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_parsing() {
        assert_eq!("tiny".parse::<EncoderSpec>().unwrap(), EncoderSpec::tiny());
        let s: EncoderSpec = "transformer:dim=16,layers=2,heads=2".parse().unwrap();
        assert_eq!((s.dim, s.layers, s.heads), (16, 2, 2));
        assert_eq!(s.to_string().parse::<EncoderSpec>().unwrap(), s);
        assert!("roberta-large".parse::<EncoderSpec>().is_err());
        assert!("transformer:dim=10,heads=4".parse::<EncoderSpec>().is_err());
    }

    #[test]
    fn encoder_output_shapes() {
        let mut store = ParamStore::new();
        let mut rng = crate::rng::seeded(0);
        let enc = TextEncoder::new(&mut store, "enc", &EncoderSpec::tiny(), 20, &mut rng).unwrap();
        let (ids, mask) = crate::nn::pad_batch(&[vec![5, 6, 7], vec![8]]).unwrap();
        let pooled = enc.pooled(&ids, &mask).unwrap();
        assert_eq!(pooled.dims(), &[2, 32]);
    }
}
