//! Objectives of the value detectors: the weighted multi-level BCE of the
//! classification model and the quadruple metric-learning loss.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::{bce_with_logits, cosine_rows};

/// Per-level weights of the hierarchical BCE.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskWeights {
    pub w_l1: f64,
    pub w_l2: f64,
    pub w_l3: f64,
}

impl Default for MultiTaskWeights {
    fn default() -> Self {
        MultiTaskWeights {
            w_l1: 0.23,
            w_l2: 0.33,
            w_l3: 0.44,
        }
    }
}

impl MultiTaskWeights {
    pub fn sum(&self) -> f64 {
        self.w_l1 + self.w_l2 + self.w_l3
    }

    pub fn combine(&self, bce_l1: f64, bce_l2: f64, bce_l3: f64) -> f64 {
        self.w_l1 * bce_l1 + self.w_l2 * bce_l2 + self.w_l3 * bce_l3
    }
}

/// Mean BCE of `sigmoid(logits)` against binary labels, in `f64`.
pub fn bce_mean(logits: &[Vec<f64>], labels: &[Vec<f64>]) -> Result<f64> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(Error::Dimension(format!(
            "{} logit rows vs {} label rows",
            logits.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for (row, (lx, ly)) in logits.iter().zip(labels).enumerate() {
        if lx.len() != ly.len() {
            return Err(Error::Dimension(format!(
                "row {row}: {} logits vs {} labels",
                lx.len(),
                ly.len()
            )));
        }
        for (&x, &y) in lx.iter().zip(ly) {
            // max(x, 0) - x y + ln(1 + e^{-|x|})
            total += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Dimension("no classes".into()));
    }
    Ok(total / n as f64)
}

/// `w_l1 * BCE_l1 + w_l2 * BCE_l2 + w_l3 * BCE_l3`, each BCE averaged over
/// classes and batch.
pub fn multitask_loss(
    logits: [&[Vec<f64>]; 3],
    labels: [&[Vec<f64>]; 3],
    weights: &MultiTaskWeights,
) -> Result<f64> {
    let l1 = bce_mean(logits[0], labels[0])?;
    let l2 = bce_mean(logits[1], labels[1])?;
    let l3 = bce_mean(logits[2], labels[2])?;
    Ok(weights.combine(l1, l2, l3))
}

/// Differentiable form of [`multitask_loss`].
pub fn multitask_loss_tensor(
    logits: [&Tensor; 3],
    labels: [&Tensor; 3],
    weights: &MultiTaskWeights,
) -> Result<Tensor> {
    let l1 = (bce_with_logits(logits[0], labels[0])? * weights.w_l1)?;
    let l2 = (bce_with_logits(logits[1], labels[1])? * weights.w_l2)?;
    let l3 = (bce_with_logits(logits[2], labels[2])? * weights.w_l3)?;
    Ok(((l1 + l2)? + l3)?)
}

/// How `D(x, y)` is read in the quadruple loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// `D = 1 - cos`.
    #[default]
    CosineDistance,
    /// `D = cos`, taken verbatim.
    LiteralSimilarity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadrupleLossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub margin: f64,
    pub mode: DistanceMode,
}

impl Default for QuadrupleLossConfig {
    fn default() -> Self {
        QuadrupleLossConfig {
            alpha: 2.0,
            beta: 1.0,
            margin: 1.0,
            mode: DistanceMode::CosineDistance,
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn check_inputs(vs: [&[f64]; 4]) -> Result<()> {
    let d = vs[0].len();
    if vs.iter().any(|v| v.len() != d) || d == 0 {
        return Err(Error::Dimension(format!(
            "quadruple vectors have lengths {:?}",
            vs.map(<[f64]>::len)
        )));
    }
    for (name, v) in ["anchor", "positive", "easy negative", "hard negative"].iter().zip(vs) {
        let n = norm(v);
        if !n.is_finite() || n == 0.0 {
            return Err(Error::Numeric(format!("{name} has zero or non-finite norm")));
        }
    }
    Ok(())
}

pub fn cosine(x: &[f64], y: &[f64]) -> f64 {
    dot(x, y) / (norm(x) * norm(y))
}

/// Gradient of `cos(x, y)` with respect to `x`.
fn cosine_grad(x: &[f64], y: &[f64]) -> Vec<f64> {
    let nx = norm(x);
    let ny = norm(y);
    let c = dot(x, y) / (nx * ny);
    x.iter()
        .zip(y)
        .map(|(xi, yi)| yi / (nx * ny) - c * xi / (nx * nx))
        .collect()
}

impl QuadrupleLossConfig {
    fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.mode {
            DistanceMode::CosineDistance => 1.0 - cosine(x, y),
            DistanceMode::LiteralSimilarity => cosine(x, y),
        }
    }

    /// Gradient of `D(x, y)` with respect to `x`.
    fn distance_grad(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let g = cosine_grad(x, y);
        match self.mode {
            DistanceMode::CosineDistance => g.into_iter().map(|v| -v).collect(),
            DistanceMode::LiteralSimilarity => g,
        }
    }
}

/// `alpha [D(a,p) - D(a,n_easy)] + beta [D(n_hard,a) - D(n_hard,p)] + margin`.
pub fn quadruple_loss(
    a: &[f64],
    p: &[f64],
    n_easy: &[f64],
    n_hard: &[f64],
    cfg: &QuadrupleLossConfig,
) -> Result<f64> {
    check_inputs([a, p, n_easy, n_hard])?;
    Ok(cfg.alpha * (cfg.distance(a, p) - cfg.distance(a, n_easy))
        + cfg.beta * (cfg.distance(n_hard, a) - cfg.distance(n_hard, p))
        + cfg.margin)
}

/// Loss plus analytic gradients with respect to `[a, p, n_easy, n_hard]`.
pub fn quadruple_loss_grad(
    a: &[f64],
    p: &[f64],
    n_easy: &[f64],
    n_hard: &[f64],
    cfg: &QuadrupleLossConfig,
) -> Result<(f64, [Vec<f64>; 4])> {
    let loss = quadruple_loss(a, p, n_easy, n_hard, cfg)?;
    let (al, be) = (cfg.alpha, cfg.beta);
    // D is symmetric, so dD(x,y)/dy = distance_grad(y, x).
    let d_ap_a = cfg.distance_grad(a, p);
    let d_ap_p = cfg.distance_grad(p, a);
    let d_ane_a = cfg.distance_grad(a, n_easy);
    let d_ane_ne = cfg.distance_grad(n_easy, a);
    let d_nha_nh = cfg.distance_grad(n_hard, a);
    let d_nha_a = cfg.distance_grad(a, n_hard);
    let d_nhp_nh = cfg.distance_grad(n_hard, p);
    let d_nhp_p = cfg.distance_grad(p, n_hard);

    let dim = a.len();
    let ga = (0..dim)
        .map(|i| al * (d_ap_a[i] - d_ane_a[i]) + be * d_nha_a[i])
        .collect();
    let gp = (0..dim).map(|i| al * d_ap_p[i] - be * d_nhp_p[i]).collect();
    let gne = (0..dim).map(|i| -al * d_ane_ne[i]).collect();
    let gnh = (0..dim).map(|i| be * (d_nha_nh[i] - d_nhp_nh[i])).collect();
    Ok((loss, [ga, gp, gne, gnh]))
}

/// Batched quadruple loss over `(n, dim)` embeddings, averaged over rows.
pub fn quadruple_loss_tensor(
    a: &Tensor,
    p: &Tensor,
    n_easy: &Tensor,
    n_hard: &Tensor,
    cfg: &QuadrupleLossConfig,
) -> Result<Tensor> {
    let d = |x: &Tensor, y: &Tensor| -> Result<Tensor> {
        let c = cosine_rows(x, y)?;
        Ok(match cfg.mode {
            DistanceMode::CosineDistance => c.affine(-1.0, 1.0)?,
            DistanceMode::LiteralSimilarity => c,
        })
    };
    let easy = ((d(a, p)? - d(a, n_easy)?)? * cfg.alpha)?;
    let hard = ((d(n_hard, a)? - d(n_hard, p)?)? * cfg.beta)?;
    Ok(((easy + hard)?.mean_all()? + cfg.margin)?)
}

/// Cosine-embedding loss: `1 - cos` for positive rows, `max(0, cos)` for
/// negative ones; averaged over rows. `labels` is `(n)` in {0, 1}.
pub fn cosine_embedding_loss(x: &Tensor, y: &Tensor, labels: &Tensor) -> Result<Tensor> {
    let c = cosine_rows(x, y)?;
    let pos = c.affine(-1.0, 1.0)?.mul(labels)?;
    let neg = c.relu()?.mul(&labels.affine(-1.0, 1.0)?)?;
    Ok((pos + neg)?.mean_all()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::device;

    #[test]
    fn worked_quadruple_examples() {
        let cfg = QuadrupleLossConfig::default();
        let (e1, e2) = ([1.0, 0.0], [0.0, 1.0]);
        assert!((quadruple_loss(&e1, &e1, &e1, &e1, &cfg).unwrap() - 1.0).abs() < 1e-12);
        assert!((quadruple_loss(&e1, &e1, &e2, &e2, &cfg).unwrap() + 1.0).abs() < 1e-12);
        assert!((quadruple_loss(&e1, &e2, &e1, &e1, &cfg).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_vector_is_numeric_error() {
        let cfg = QuadrupleLossConfig::default();
        let err = quadruple_loss(&[0.0, 0.0], &[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0], &cfg);
        assert!(matches!(err, Err(Error::Numeric(_))));
    }

    #[test]
    fn tensor_form_agrees_with_scalar_form() {
        let cfg = QuadrupleLossConfig::default();
        let rows = [
            [0.3, -1.2, 0.5],
            [0.1, 0.4, -0.7],
            [-0.9, 0.2, 0.2],
            [0.6, 0.6, 0.1],
        ];
        let t = |r: &[f64; 3]| {
            Tensor::from_vec(r.iter().map(|&v| v as f32).collect::<Vec<_>>(), (1, 3), &device()).unwrap()
        };
        let expect = quadruple_loss(&rows[0], &rows[1], &rows[2], &rows[3], &cfg).unwrap();
        let got = quadruple_loss_tensor(&t(&rows[0]), &t(&rows[1]), &t(&rows[2]), &t(&rows[3]), &cfg)
            .unwrap()
            .to_scalar::<f32>()
            .unwrap() as f64;
        assert!((expect - got).abs() < 1e-5);
    }

    #[test]
    fn zero_logits_give_ln2() {
        let logits = vec![vec![0.0; 3]; 2];
        let labels = vec![vec![1.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]];
        let w = MultiTaskWeights::default();
        let loss = multitask_loss([&logits, &logits, &logits], [&labels, &labels, &labels], &w).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn cosine_embedding_loss_of_identical_positive_rows_is_zero() {
        let x = Tensor::new(&[[0.5f32, -0.25, 2.0]], &device()).unwrap();
        let labels = Tensor::new(&[1f32], &device()).unwrap();
        let loss = cosine_embedding_loss(&x, &x, &labels).unwrap().to_scalar::<f32>().unwrap();
        assert!(loss.abs() < 1e-6);
    }
}
