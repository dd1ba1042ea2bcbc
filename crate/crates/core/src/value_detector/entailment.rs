//! Entailment model: scores whether an argument entails a value descriptor
//! from the pooled encoding of the concatenated pair.

use std::path::Path;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::{
    load_meta, require_trained, save_checkpoint, CheckpointMeta, L2Score, ValuePrediction,
    ValuePredictor, DEFAULT_THRESHOLD, WEIGHTS_FILE,
};
use crate::error::{Error, Result};
use crate::nn::ops::{bce_with_logits, sigmoid};
use crate::nn::{device, fit, pad_batch, EncoderSpec, Linear, ParamStore, TextEncoder, TrainConfig, TrainLog, Vocab};
use crate::rng::derived;
use crate::taxonomy::{EntailmentPair, ValueTaxonomy};

const MODEL_TYPE: &str = "entailment";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EntailmentConfig {
    pub encoder: EncoderSpec,
    pub train: TrainConfig,
    pub threshold: f64,
}

impl Default for EntailmentConfig {
    fn default() -> Self {
        EntailmentConfig {
            encoder: EncoderSpec::tiny(),
            train: TrainConfig::default(),
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

pub struct EntailmentModel {
    taxonomy: ValueTaxonomy,
    vocab: Vocab,
    config: EntailmentConfig,
    store: ParamStore,
    encoder: TextEncoder,
    head: Linear,
    trained: bool,
    log: Option<TrainLog>,
}

impl EntailmentModel {
    pub fn new(taxonomy: ValueTaxonomy, vocab: Vocab, config: EntailmentConfig) -> Result<Self> {
        let mut rng = derived(config.train.seed, MODEL_TYPE);
        let mut store = ParamStore::new();
        let encoder = TextEncoder::new(&mut store, "encoder", &config.encoder, vocab.len(), &mut rng)?;
        let head = Linear::new(&mut store, "head", config.encoder.dim, 1, &mut rng)?;
        Ok(EntailmentModel {
            taxonomy,
            vocab,
            config,
            store,
            encoder,
            head,
            trained: false,
            log: None,
        })
    }

    pub fn taxonomy(&self) -> &ValueTaxonomy {
        &self.taxonomy
    }

    pub fn train_log(&self) -> Option<&TrainLog> {
        self.log.as_ref()
    }

    fn encode_pair(&self, argument: &str, descriptor: usize) -> Vec<u32> {
        self.vocab.encode_pair(
            argument,
            self.taxonomy.descriptor(descriptor),
            self.config.encoder.max_len,
        )
    }

    /// Logits `(n)` for a batch of encoded pairs.
    fn logits(&self, ids: &[Vec<u32>]) -> Result<Tensor> {
        let (ids, mask) = pad_batch(ids)?;
        let pooled = self.encoder.pooled(&ids, &mask)?;
        Ok(self.head.forward(&pooled)?.squeeze(1)?)
    }

    fn batch_loss(&self, ids: &[Vec<u32>], labels: &[f32], batch: &[usize]) -> Result<Tensor> {
        let x: Vec<Vec<u32>> = batch.iter().map(|&i| ids[i].clone()).collect();
        let y: Vec<f32> = batch.iter().map(|&i| labels[i]).collect();
        let y = Tensor::from_vec(y, batch.len(), &device())?;
        bce_with_logits(&self.logits(&x)?, &y)
    }

    fn mean_loss(&self, ids: &[Vec<u32>], labels: &[f32]) -> Result<f64> {
        let idx: Vec<usize> = (0..ids.len()).collect();
        let mut total = 0.0;
        for chunk in idx.chunks(64) {
            total += self.batch_loss(ids, labels, chunk)?.to_scalar::<f32>()? as f64 * chunk.len() as f64;
        }
        Ok(total / ids.len() as f64)
    }

    pub fn train(&mut self, train: &[EntailmentPair], validation: &[EntailmentPair]) -> Result<TrainLog> {
        let n_desc = self.taxonomy.descriptor_count();
        if let Some(p) = train.iter().chain(validation).find(|p| p.descriptor >= n_desc) {
            return Err(Error::Schema(format!("descriptor index {} out of range", p.descriptor)));
        }
        let encode = |pairs: &[EntailmentPair]| -> (Vec<Vec<u32>>, Vec<f32>) {
            pairs
                .iter()
                .map(|p| (self.encode_pair(&p.argument, p.descriptor), if p.label { 1.0 } else { 0.0 }))
                .unzip()
        };
        let (tx, ty) = encode(train);
        let (vx, vy) = if validation.is_empty() {
            log::warn!("no validation pairs; early stopping watches the training loss");
            (tx.clone(), ty.clone())
        } else {
            encode(validation)
        };
        let log = fit(
            &self.store,
            &self.config.train,
            tx.len(),
            |batch| self.batch_loss(&tx, &ty, batch),
            || self.mean_loss(&vx, &vy),
        )?;
        self.trained = true;
        self.log = Some(log.clone());
        Ok(log)
    }

    /// Entailment probability of `argument` against every descriptor.
    pub fn descriptor_probabilities(&self, argument: &str) -> Result<Vec<f64>> {
        require_trained(self)?;
        let ids: Vec<Vec<u32>> = (0..self.taxonomy.descriptor_count())
            .map(|d| self.encode_pair(argument, d))
            .collect();
        let mut out = Vec::with_capacity(ids.len());
        for chunk in ids.chunks(128) {
            let p = sigmoid(&self.logits(chunk)?)?.to_vec1::<f32>()?;
            out.extend(p.into_iter().map(f64::from));
        }
        Ok(out)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        require_trained(self)?;
        save_checkpoint(
            dir,
            &self.store,
            &CheckpointMeta {
                model_type: MODEL_TYPE.into(),
                taxonomy_hash: self.taxonomy.content_hash(),
                threshold: self.config.threshold,
                training_config: self.config.train.clone(),
                encoder: self.config.encoder.clone(),
                vocab: self.vocab.clone(),
                train_log: self.log.clone(),
            },
        )
    }

    pub fn load(dir: &Path, taxonomy: ValueTaxonomy) -> Result<Self> {
        let meta = load_meta(dir, MODEL_TYPE, &taxonomy.content_hash())?;
        let config = EntailmentConfig {
            encoder: meta.encoder,
            train: meta.training_config,
            threshold: meta.threshold,
        };
        let mut model = EntailmentModel::new(taxonomy, meta.vocab, config)?;
        model.store.load(&dir.join(WEIGHTS_FILE))?;
        model.trained = true;
        model.log = meta.train_log;
        Ok(model)
    }
}

/// Per-L2 aggregation of descriptor probabilities: the category's
/// probability is the maximum over its descriptors, and it is positive iff
/// that maximum reaches the threshold.
pub fn aggregate_entailment(taxonomy: &ValueTaxonomy, probs: &[f64], threshold: f64) -> Result<Vec<L2Score>> {
    if probs.len() != taxonomy.descriptor_count() {
        return Err(Error::Dimension(format!(
            "{} probabilities for {} descriptors",
            probs.len(),
            taxonomy.descriptor_count()
        )));
    }
    Ok((0..taxonomy.l2_count())
        .map(|c| {
            let best = taxonomy
                .descriptors_of_l2(c)
                .into_iter()
                .map(|d| probs[d])
                .fold(0.0f64, f64::max);
            L2Score {
                prob: best,
                decision: u8::from(best >= threshold),
            }
        })
        .collect())
}

pub fn predict_entailment(argument: &str, model: &EntailmentModel) -> Result<ValuePrediction> {
    let probs = model.descriptor_probabilities(argument)?;
    let scores = aggregate_entailment(&model.taxonomy, &probs, model.config.threshold)?;
    Ok(ValuePrediction {
        text: argument.to_string(),
        l2: model
            .taxonomy
            .l2_names()
            .map(str::to_string)
            .zip(scores)
            .collect(),
    })
}

impl ValuePredictor for EntailmentModel {
    fn model_type(&self) -> &'static str {
        MODEL_TYPE
    }

    fn is_trained(&self) -> bool {
        self.trained
    }

    fn predict(&self, texts: &[String]) -> Result<Vec<ValuePrediction>> {
        texts.iter().map(|t| predict_entailment(t, self)).collect()
    }
}

/// Builds a vocabulary over arguments and descriptors and trains the model.
pub fn train_entailment_model(
    taxonomy: &ValueTaxonomy,
    train: &[EntailmentPair],
    validation: &[EntailmentPair],
    config: &EntailmentConfig,
) -> Result<EntailmentModel> {
    if train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let descriptors: Vec<&str> = (0..taxonomy.descriptor_count()).map(|d| taxonomy.descriptor(d)).collect();
    let vocab = Vocab::build(
        train.iter().map(|p| p.argument.as_str()).chain(descriptors),
        1,
    );
    let mut model = EntailmentModel::new(taxonomy.clone(), vocab, config.clone())?;
    model.train(train, validation)?;
    Ok(model)
}
