//! Hierarchical multi-label classifier: one linear head per taxonomy level
//! on the pooled encoder output, trained with the weighted BCE.

use std::collections::BTreeSet;
use std::path::Path;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::loss::{multitask_loss_tensor, MultiTaskWeights};
use super::{
    load_meta, require_trained, save_checkpoint, CheckpointMeta, ValuePrediction, ValuePredictor,
    DEFAULT_THRESHOLD, WEIGHTS_FILE,
};
use crate::error::{Error, Result};
use crate::nn::ops::sigmoid;
use crate::nn::{device, fit, pad_batch, EncoderSpec, Linear, ParamStore, TextEncoder, TrainConfig, TrainLog, Vocab};
use crate::rng::derived;
use crate::taxonomy::{LabeledArgument, ValueTaxonomy};

const MODEL_TYPE: &str = "classification";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassificationConfig {
    pub encoder: EncoderSpec,
    pub train: TrainConfig,
    pub weights: MultiTaskWeights,
    pub threshold: f64,
}

impl Default for ClassificationConfig {
    fn default() -> Self {
        ClassificationConfig {
            encoder: EncoderSpec::tiny(),
            train: TrainConfig::default(),
            weights: MultiTaskWeights::default(),
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

pub struct ClassificationModel {
    taxonomy: ValueTaxonomy,
    vocab: Vocab,
    config: ClassificationConfig,
    store: ParamStore,
    encoder: TextEncoder,
    heads: [Linear; 3],
    trained: bool,
    log: Option<TrainLog>,
}

struct Encoded {
    ids: Vec<Vec<u32>>,
    targets: [Vec<Vec<f32>>; 3],
}

fn rows_tensor(rows: &[&Vec<f32>]) -> Result<Tensor> {
    let width = rows.first().map_or(0, |r| r.len());
    let flat: Vec<f32> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    Ok(Tensor::from_vec(flat, (rows.len(), width), &device())?)
}

impl ClassificationModel {
    /// An untrained model over `vocab`.
    pub fn new(taxonomy: ValueTaxonomy, vocab: Vocab, config: ClassificationConfig) -> Result<Self> {
        let mut rng = derived(config.train.seed, MODEL_TYPE);
        let mut store = ParamStore::new();
        let encoder = TextEncoder::new(&mut store, "encoder", &config.encoder, vocab.len(), &mut rng)?;
        let dim = config.encoder.dim;
        let heads = [
            Linear::new(&mut store, "head_l1", dim, taxonomy.l1_count(), &mut rng)?,
            Linear::new(&mut store, "head_l2", dim, taxonomy.l2_count(), &mut rng)?,
            Linear::new(&mut store, "head_l3", dim, taxonomy.l3_count(), &mut rng)?,
        ];
        Ok(ClassificationModel {
            taxonomy,
            vocab,
            config,
            store,
            encoder,
            heads,
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

    /// Multi-hot targets for the three levels. L1 targets come from
    /// `l1_labels` when present, otherwise from every child of a gold L2.
    pub fn level_targets(&self, arg: &LabeledArgument) -> Result<[Vec<f32>; 3]> {
        let tax = &self.taxonomy;
        let l2 = tax.resolve_l2(&arg.l2_labels)?;
        let l1: BTreeSet<usize> = match &arg.l1_labels {
            Some(names) => names
                .iter()
                .map(|n| {
                    tax.l1_index(n)
                        .ok_or_else(|| Error::Schema(format!("unknown L1 value `{n}`")))
                })
                .collect::<Result<_>>()?,
            None => l2.iter().flat_map(|&c| tax.l1_children(c)).collect(),
        };
        let l3: BTreeSet<usize> = l2.iter().map(|&c| tax.l2_parent(c)).collect();
        let hot = |set: &BTreeSet<usize>, n: usize| -> Vec<f32> {
            (0..n).map(|i| if set.contains(&i) { 1.0 } else { 0.0 }).collect()
        };
        Ok([
            hot(&l1, tax.l1_count()),
            hot(&l2, tax.l2_count()),
            hot(&l3, tax.l3_count()),
        ])
    }

    fn encode(&self, args: &[LabeledArgument]) -> Result<Encoded> {
        let mut ids = Vec::with_capacity(args.len());
        let mut targets: [Vec<Vec<f32>>; 3] = Default::default();
        for arg in args {
            ids.push(self.vocab.encode_single(&arg.text, self.config.encoder.max_len));
            for (level, t) in self.level_targets(arg)?.into_iter().enumerate() {
                targets[level].push(t);
            }
        }
        Ok(Encoded { ids, targets })
    }

    fn logits(&self, ids: &[Vec<u32>]) -> Result<[Tensor; 3]> {
        let (ids, mask) = pad_batch(ids)?;
        let pooled = self.encoder.pooled(&ids, &mask)?;
        Ok([
            self.heads[0].forward(&pooled)?,
            self.heads[1].forward(&pooled)?,
            self.heads[2].forward(&pooled)?,
        ])
    }

    fn batch_loss(&self, data: &Encoded, batch: &[usize]) -> Result<Tensor> {
        let ids: Vec<Vec<u32>> = batch.iter().map(|&i| data.ids[i].clone()).collect();
        let logits = self.logits(&ids)?;
        let labels = (0..3)
            .map(|l| rows_tensor(&batch.iter().map(|&i| &data.targets[l][i]).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?;
        multitask_loss_tensor(
            [&logits[0], &logits[1], &logits[2]],
            [&labels[0], &labels[1], &labels[2]],
            &self.config.weights,
        )
    }

    fn mean_loss(&self, data: &Encoded) -> Result<f64> {
        let n = data.ids.len();
        let idx: Vec<usize> = (0..n).collect();
        let mut total = 0.0;
        for chunk in idx.chunks(64) {
            let loss = self.batch_loss(data, chunk)?.to_scalar::<f32>()? as f64;
            total += loss * chunk.len() as f64;
        }
        Ok(total / n as f64)
    }

    pub fn train(&mut self, train: &[LabeledArgument], validation: &[LabeledArgument]) -> Result<TrainLog> {
        let train_data = self.encode(train)?;
        let val_data = if validation.is_empty() {
            log::warn!("no validation arguments; early stopping watches the training loss");
            self.encode(train)?
        } else {
            self.encode(validation)?
        };
        let log = fit(
            &self.store,
            &self.config.train,
            train_data.ids.len(),
            |batch| self.batch_loss(&train_data, batch),
            || self.mean_loss(&val_data),
        )?;
        self.trained = true;
        self.log = Some(log.clone());
        Ok(log)
    }

    /// L2 probabilities for each text, in taxonomy order.
    pub fn l2_probabilities(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(64) {
            let ids: Vec<Vec<u32>> = chunk
                .iter()
                .map(|t| self.vocab.encode_single(t, self.config.encoder.max_len))
                .collect();
            let [_, l2, _] = self.logits(&ids)?;
            for row in sigmoid(&l2)?.to_vec2::<f32>()? {
                out.push(row.into_iter().map(f64::from).collect());
            }
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
        )?;
        crate::artifact::write_json(&dir.join("weights_config.json"), &self.config.weights)
    }

    pub fn load(dir: &Path, taxonomy: ValueTaxonomy) -> Result<Self> {
        let meta = load_meta(dir, MODEL_TYPE, &taxonomy.content_hash())?;
        let weights = crate::artifact::read_json(&dir.join("weights_config.json"))?;
        let config = ClassificationConfig {
            encoder: meta.encoder,
            train: meta.training_config,
            weights,
            threshold: meta.threshold,
        };
        let mut model = ClassificationModel::new(taxonomy, meta.vocab, config)?;
        model.store.load(&dir.join(WEIGHTS_FILE))?;
        model.trained = true;
        model.log = meta.train_log;
        Ok(model)
    }
}

impl ValuePredictor for ClassificationModel {
    fn model_type(&self) -> &'static str {
        MODEL_TYPE
    }

    fn is_trained(&self) -> bool {
        self.trained
    }

    fn predict(&self, texts: &[String]) -> Result<Vec<ValuePrediction>> {
        require_trained(self)?;
        let probs = self.l2_probabilities(texts)?;
        Ok(texts
            .iter()
            .zip(probs)
            .map(|(t, p)| ValuePrediction::from_probs(t, self.taxonomy.l2_names(), &p, self.config.threshold))
            .collect())
    }
}

/// Builds a vocabulary over the training texts and trains a classifier.
pub fn train_classification_model(
    taxonomy: &ValueTaxonomy,
    train: &[LabeledArgument],
    validation: &[LabeledArgument],
    config: &ClassificationConfig,
) -> Result<ClassificationModel> {
    if train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let vocab = Vocab::build(train.iter().map(|a| a.text.as_str()), 1);
    let mut model = ClassificationModel::new(taxonomy.clone(), vocab, config.clone())?;
    model.train(train, validation)?;
    Ok(model)
}
