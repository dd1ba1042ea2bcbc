//! Differentiable building blocks missing from `candle-core`.

use candle_core::{DType, Tensor, D};

use crate::error::{Error, Result};

pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

pub fn log_softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let shifted = x.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok((x.neg()?.exp()? + 1.0)?.recip()?)
}

/// Element-wise `log(1 + exp(x))`, stable for large `|x|`.
fn softplus(x: &Tensor) -> Result<Tensor> {
    let pos = x.relu()?;
    let tail = x.abs()?.neg()?.exp()?.affine(1.0, 1.0)?.log()?;
    Ok((pos + tail)?)
}

/// Mean binary cross-entropy over all elements of sigmoid(`logits`).
pub fn bce_with_logits(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    if logits.dims() != targets.dims() {
        return Err(Error::Dimension(format!(
            "logits {:?} vs targets {:?}",
            logits.dims(),
            targets.dims()
        )));
    }
    // max(x, 0) - x * y + log(1 + exp(-|x|))
    let loss = (softplus(logits)? - logits.mul(targets)?)?;
    Ok(loss.mean_all()?)
}

/// Token cross-entropy averaged over positions where `weights` is 1.
/// `logits`: (n, vocab), `targets`: (n) u32, `weights`: (n) f32.
pub fn masked_cross_entropy(logits: &Tensor, targets: &Tensor, weights: &Tensor) -> Result<Tensor> {
    let logp = log_softmax_last(logits)?;
    let picked = logp.gather(&targets.unsqueeze(1)?, 1)?.squeeze(1)?;
    let total = weights.sum_all()?.to_scalar::<f32>()?;
    if total <= 0.0 {
        return Err(Error::Numeric("cross-entropy over zero target tokens".into()));
    }
    Ok((picked.mul(weights)?.sum_all()?.neg()? / total as f64)?)
}

/// Per-position gold-token log-probabilities, `(n)`.
pub fn gold_log_probs(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    let logp = log_softmax_last(logits)?;
    Ok(logp.gather(&targets.unsqueeze(1)?, 1)?.squeeze(1)?)
}

/// Row-wise cosine similarity of two `(n, d)` matrices.
pub fn cosine_rows(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let dot = a.mul(b)?.sum(D::Minus1)?;
    let na = a.sqr()?.sum(D::Minus1)?.sqrt()?;
    let nb = b.sqr()?.sum(D::Minus1)?.sqrt()?;
    let denom = na.mul(&nb)?.affine(1.0, 1e-8)?;
    Ok(dot.div(&denom)?)
}

/// Scales each row to unit length.
pub fn l2_normalize_rows(x: &Tensor) -> Result<Tensor> {
    let norm = x.sqr()?.sum_keepdim(D::Minus1)?.sqrt()?.affine(1.0, 1e-8)?;
    Ok(x.broadcast_div(&norm)?)
}

pub fn to_f32_vec2(x: &Tensor) -> Result<Vec<Vec<f32>>> {
    Ok(x.to_dtype(DType::F32)?.to_vec2::<f32>()?)
}
