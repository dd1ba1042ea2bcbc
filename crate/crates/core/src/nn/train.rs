use candle_core::Tensor;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::optim::{AdamW, AdamWConfig, EarlyStopping};
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    /// Consecutive non-improving validation epochs before stopping.
    pub patience: usize,
    pub max_grad_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            weight_decay: 0.01,
            batch_size: 16,
            max_epochs: 100,
            max_steps: None,
            patience: 4,
            max_grad_norm: Some(1.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_lr(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn with_patience(mut self, patience: usize) -> Self {
        self.patience = patience;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub stopped_early: bool,
    pub steps: usize,
}

impl TrainLog {
    pub fn last_val_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.val_loss)
    }
}

/// Mini-batch AdamW loop with per-epoch validation and early stopping.
///
/// `batch_loss` maps a batch of training indices to a scalar loss tensor;
/// `validate` returns the current validation loss.
pub fn fit(
    store: &ParamStore,
    config: &TrainConfig,
    n_train: usize,
    mut batch_loss: impl FnMut(&[usize]) -> Result<Tensor>,
    mut validate: impl FnMut() -> Result<f64>,
) -> Result<TrainLog> {
    if n_train == 0 {
        return Err(Error::Config("empty training set".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut opt = AdamW::new(
        store.vars(),
        AdamWConfig {
            lr: config.learning_rate,
            weight_decay: config.weight_decay,
            max_grad_norm: config.max_grad_norm,
            ..Default::default()
        },
    )?;
    let mut stopper = EarlyStopping::new(config.patience);
    let mut rng = seeded(config.seed);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..n_train).collect();
    'epochs: for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        let mut budget_hit = false;
        for batch in order.chunks(config.batch_size) {
            let loss = batch_loss(batch)?;
            let value = loss.to_scalar::<f32>()? as f64;
            if !value.is_finite() {
                return Err(Error::Numeric(format!("non-finite training loss at step {}", log.steps)));
            }
            opt.step(&loss.backward()?)?;
            total += value;
            batches += 1;
            log.steps += 1;
            if config.max_steps.is_some_and(|m| log.steps >= m) {
                budget_hit = true;
                break;
            }
        }
        let val_loss = validate()?;
        log::debug!("epoch {epoch}: train {:.5} val {val_loss:.5}", total / batches as f64);
        log.epochs.push(EpochLog {
            epoch,
            steps: log.steps,
            train_loss: total / batches as f64,
            val_loss,
        });
        if stopper.observe(val_loss) {
            log.stopped_early = true;
            break 'epochs;
        }
        if budget_hit {
            break;
        }
    }
    Ok(log)
}
