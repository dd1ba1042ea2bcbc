use candle_core::{Tensor, D};

use super::ops::softmax_last;
use super::params::{Init, ParamStore};
use crate::error::Result;
use crate::rng::Rng;

pub struct Linear {
    weight: Tensor,
    bias: Option<Tensor>,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut Rng) -> Result<Self> {
        let weight = store.param(&format!("{name}.weight"), &[output, input], Init::XavierUniform, rng)?;
        let bias = store.param(&format!("{name}.bias"), &[output], Init::Zeros, rng)?;
        Ok(Linear {
            weight,
            bias: Some(bias),
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.broadcast_matmul(&self.weight.t()?)?;
        Ok(match &self.bias {
            Some(b) => y.broadcast_add(b)?,
            None => y,
        })
    }
}

pub struct Embedding {
    weight: Tensor,
    dim: usize,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, name: &str, count: usize, dim: usize, rng: &mut Rng) -> Result<Self> {
        let weight = store.param(&format!("{name}.weight"), &[count, dim], Init::Uniform(0.1), rng)?;
        Ok(Embedding { weight, dim })
    }

    /// `ids`: (batch, len) u32 -> (batch, len, dim)
    pub fn forward(&self, ids: &Tensor) -> Result<Tensor> {
        let (b, t) = ids.dims2()?;
        let flat = self.weight.index_select(&ids.flatten_all()?, 0)?;
        Ok(flat.reshape((b, t, self.dim))?)
    }

    /// The first `len` rows, for learned positions.
    pub fn rows(&self, len: usize) -> Result<Tensor> {
        Ok(self.weight.narrow(0, 0, len)?)
    }

    pub fn count(&self) -> usize {
        self.weight.dims()[0]
    }
}

pub struct LayerNorm {
    gamma: Tensor,
    beta: Tensor,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut Rng) -> Result<Self> {
        Ok(LayerNorm {
            gamma: store.param(&format!("{name}.gamma"), &[dim], Init::Ones, rng)?,
            beta: store.param(&format!("{name}.beta"), &[dim], Init::Zeros, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&var.affine(1.0, 1e-5)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.gamma)?.broadcast_add(&self.beta)?)
    }
}

/// Additive key-padding mask `(batch, 1, 1, len)` from a `(batch, len)` 0/1 mask.
pub fn padding_mask(mask: &Tensor) -> Result<Tensor> {
    let (b, t) = mask.dims2()?;
    Ok(mask.affine(1e9, -1e9)?.reshape((b, 1, 1, t))?)
}

/// Additive causal mask `(1, 1, len, len)`.
pub fn causal_mask(len: usize) -> Result<Tensor> {
    let data: Vec<f32> = (0..len)
        .flat_map(|i| (0..len).map(move |j| if j <= i { 0.0 } else { -1e9 }))
        .collect();
    Ok(Tensor::from_vec(data, (1, 1, len, len), &super::device())?)
}

pub struct MultiHeadAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
    head_dim: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(crate::Error::Config(format!("dim {dim} not divisible by {heads} heads")));
        }
        Ok(MultiHeadAttention {
            q: Linear::new(store, &format!("{name}.q"), dim, dim, rng)?,
            k: Linear::new(store, &format!("{name}.k"), dim, dim, rng)?,
            v: Linear::new(store, &format!("{name}.v"), dim, dim, rng)?,
            o: Linear::new(store, &format!("{name}.o"), dim, dim, rng)?,
            heads,
            head_dim: dim / heads,
        })
    }

    fn split(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, _) = x.dims3()?;
        Ok(x.reshape((b, t, self.heads, self.head_dim))?
            .transpose(1, 2)?
            .contiguous()?)
    }

    /// `query`: (b, tq, d), `memory`: (b, tk, d); `mask` is additive and
    /// broadcastable to (b, heads, tq, tk).
    pub fn forward(&self, query: &Tensor, memory: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        let (b, tq, d) = query.dims3()?;
        let q = self.split(&self.q.forward(query)?)?;
        let k = self.split(&self.k.forward(memory)?)?;
        let v = self.split(&self.v.forward(memory)?)?;
        let scale = 1.0 / (self.head_dim as f64).sqrt();
        let mut scores = (q.matmul(&k.t()?.contiguous()?)? * scale)?;
        if let Some(m) = mask {
            scores = scores.broadcast_add(m)?;
        }
        let attn = softmax_last(&scores)?;
        let out = attn.matmul(&v)?.transpose(1, 2)?.contiguous()?.reshape((b, tq, d))?;
        self.o.forward(&out)
    }
}

pub struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        Ok(FeedForward {
            up: Linear::new(store, &format!("{name}.up"), dim, hidden, rng)?,
            down: Linear::new(store, &format!("{name}.down"), hidden, dim, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.down.forward(&self.up.forward(x)?.gelu()?)
    }
}

/// Pre-norm transformer encoder block.
pub struct EncoderLayer {
    ln_attn: LayerNorm,
    attn: MultiHeadAttention,
    ln_ff: LayerNorm,
    ff: FeedForward,
}

impl EncoderLayer {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, ff: usize, rng: &mut Rng) -> Result<Self> {
        Ok(EncoderLayer {
            ln_attn: LayerNorm::new(store, &format!("{name}.ln_attn"), dim, rng)?,
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, heads, rng)?,
            ln_ff: LayerNorm::new(store, &format!("{name}.ln_ff"), dim, rng)?,
            ff: FeedForward::new(store, &format!("{name}.ff"), dim, ff, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        let h = self.ln_attn.forward(x)?;
        let x = (x + self.attn.forward(&h, &h, mask)?)?;
        let h = self.ln_ff.forward(&x)?;
        Ok((&x + self.ff.forward(&h)?)?)
    }
}

/// Pre-norm transformer decoder block with cross-attention.
pub struct DecoderLayer {
    ln_self: LayerNorm,
    self_attn: MultiHeadAttention,
    ln_cross: LayerNorm,
    cross_attn: MultiHeadAttention,
    ln_ff: LayerNorm,
    ff: FeedForward,
}

impl DecoderLayer {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, ff: usize, rng: &mut Rng) -> Result<Self> {
        Ok(DecoderLayer {
            ln_self: LayerNorm::new(store, &format!("{name}.ln_self"), dim, rng)?,
            self_attn: MultiHeadAttention::new(store, &format!("{name}.self_attn"), dim, heads, rng)?,
            ln_cross: LayerNorm::new(store, &format!("{name}.ln_cross"), dim, rng)?,
            cross_attn: MultiHeadAttention::new(store, &format!("{name}.cross_attn"), dim, heads, rng)?,
            ln_ff: LayerNorm::new(store, &format!("{name}.ln_ff"), dim, rng)?,
            ff: FeedForward::new(store, &format!("{name}.ff"), dim, ff, rng)?,
        })
    }

    pub fn forward(
        &self,
        x: &Tensor,
        self_mask: &Tensor,
        memory: &Tensor,
        memory_mask: Option<&Tensor>,
    ) -> Result<Tensor> {
        let h = self.ln_self.forward(x)?;
        let x = (x + self.self_attn.forward(&h, &h, Some(self_mask))?)?;
        let h = self.ln_cross.forward(&x)?;
        let x = (&x + self.cross_attn.forward(&h, memory, memory_mask)?)?;
        let h = self.ln_ff.forward(&x)?;
        Ok((&x + self.ff.forward(&h)?)?)
    }
}
