use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            max_grad_norm: Some(1.0),
        }
    }
}

/// Decoupled weight-decay Adam.
pub struct AdamW {
    config: AdamWConfig,
    step: usize,
    state: Vec<(Var, Tensor, Tensor)>,
}

impl AdamW {
    pub fn new(vars: Vec<Var>, config: AdamWConfig) -> Result<Self> {
        let state = vars
            .into_iter()
            .map(|v| {
                let m = v.as_tensor().zeros_like()?;
                let s = v.as_tensor().zeros_like()?;
                Ok((v, m, s))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AdamW {
            config,
            step: 0,
            state,
        })
    }

    pub fn steps(&self) -> usize {
        self.step
    }

    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.step += 1;
        let c = &self.config;
        let scale = match c.max_grad_norm {
            Some(max_norm) => {
                let mut total = 0f64;
                for (var, _, _) in &self.state {
                    if let Some(g) = grads.get(var.as_tensor()) {
                        total += g.sqr()?.sum_all()?.to_scalar::<f32>()? as f64;
                    }
                }
                let norm = total.sqrt();
                if norm > max_norm {
                    max_norm / (norm + 1e-6)
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (var, m, v) in &mut self.state {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            let g = (g.detach() * scale)?;
            *m = ((&*m * c.beta1)? + (&g * (1.0 - c.beta1))?)?;
            *v = ((&*v * c.beta2)? + (g.sqr()? * (1.0 - c.beta2))?)?;
            let denom = ((&*v / bc2)?.sqrt()? + c.eps)?;
            let update = ((&*m / bc1)? / denom)?;
            let theta = var.as_tensor().detach();
            let next = ((theta * (1.0 - c.lr * c.weight_decay))? - (update * c.lr)?)?;
            var.set(&next)?;
        }
        Ok(())
    }
}

/// Stops once the validation loss has failed to improve on its best value
/// for `patience` consecutive epochs.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Records an epoch's validation loss; returns true when training should stop.
    pub fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        self.patience > 0 && self.bad_epochs >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stops_after_patience_non_improving_epochs() {
        let mut es = EarlyStopping::new(5);
        let losses = [1.0, 0.9, 0.95, 0.9, 0.91, 0.92, 0.93, 0.5];
        let stop_at = losses.iter().position(|&l| es.observe(l));
        // improvements at epochs 0 and 1, then five non-improving epochs (2..=6)
        assert_eq!(stop_at, Some(6));
    }

    #[test]
    fn adamw_minimizes_a_quadratic() {
        let dev = crate::nn::device();
        let x = Var::from_tensor(&Tensor::new(&[3f32, -2.0], &dev).unwrap()).unwrap();
        let mut opt = AdamW::new(
            vec![x.clone()],
            AdamWConfig { lr: 0.1, weight_decay: 0.0, max_grad_norm: None, ..Default::default() },
        )
        .unwrap();
        for _ in 0..300 {
            let loss = x.as_tensor().sqr().unwrap().sum_all().unwrap();
            opt.step(&loss.backward().unwrap()).unwrap();
        }
        let v = x.as_tensor().to_vec1::<f32>().unwrap();
        assert!(v.iter().all(|a| a.abs() < 0.05), "{v:?}");
    }
}
