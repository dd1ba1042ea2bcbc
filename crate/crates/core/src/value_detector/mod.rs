//! Human-value detection: a hierarchical classifier, an entailment model,
//! a metric-learning similarity model, and their majority ensemble.
//!
//! Every model predicts over the L2 categories of its taxonomy; downstream
//! annotation keeps only the six top categories.

mod classification;
mod entailment;
mod loss;
mod similarity;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use classification::{train_classification_model, ClassificationConfig, ClassificationModel};
pub use entailment::{
    aggregate_entailment, predict_entailment, train_entailment_model, EntailmentConfig,
    EntailmentModel,
};
pub use loss::{
    bce_mean, cosine, cosine_embedding_loss, multitask_loss, multitask_loss_tensor, quadruple_loss,
    quadruple_loss_grad, quadruple_loss_tensor, DistanceMode, MultiTaskWeights,
    QuadrupleLossConfig,
};
pub use similarity::{
    predict_similarity, similarity_from_scores, train_argument_embedder,
    train_descriptor_embedder, centroid_cohesion, ArgumentEmbedderConfig, Centroids, DescriptorEmbedder,
    EmbedderConfig, EmbeddingSpace,
};

use crate::artifact::{read_json, write_json};
use crate::error::{Error, Result};
use crate::nn::{EncoderSpec, ParamStore, TrainConfig, TrainLog, Vocab};
use crate::taxonomy::TOP_VALUE_CATEGORIES;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct L2Score {
    pub prob: f64,
    pub decision: u8,
}

/// Per-category probabilities and decisions for one text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValuePrediction {
    pub text: String,
    pub l2: BTreeMap<String, L2Score>,
}

impl ValuePrediction {
    /// Thresholded prediction from per-label probabilities.
    pub fn from_probs<'a>(
        text: &str,
        labels: impl IntoIterator<Item = &'a str>,
        probs: &[f64],
        threshold: f64,
    ) -> Self {
        let l2 = labels
            .into_iter()
            .zip(probs)
            .map(|(label, &p)| {
                let p = p.clamp(0.0, 1.0);
                (
                    label.to_string(),
                    L2Score {
                        prob: p,
                        decision: u8::from(p >= threshold),
                    },
                )
            })
            .collect();
        ValuePrediction {
            text: text.to_string(),
            l2,
        }
    }

    pub fn positive_labels(&self) -> Vec<&str> {
        self.l2
            .iter()
            .filter(|(_, s)| s.decision == 1)
            .map(|(l, _)| l.as_str())
            .collect()
    }

    /// Keeps the six top categories that exist in this prediction.
    pub fn top_categories(&self) -> ValuePrediction {
        ValuePrediction {
            text: self.text.clone(),
            l2: self
                .l2
                .iter()
                .filter(|(l, _)| TOP_VALUE_CATEGORIES.contains(&l.as_str()))
                .map(|(l, s)| (l.clone(), *s))
                .collect(),
        }
    }
}

/// A trained value model that maps texts to per-category predictions.
pub trait ValuePredictor: Send + Sync {
    fn model_type(&self) -> &'static str;

    fn is_trained(&self) -> bool;

    fn predict(&self, texts: &[String]) -> Result<Vec<ValuePrediction>>;
}

pub(crate) fn require_trained(model: &dyn ValuePredictor) -> Result<()> {
    if model.is_trained() {
        Ok(())
    } else {
        Err(Error::State(format!("{} model is not trained", model.model_type())))
    }
}

/// Majority decision: true iff at least `quorum` votes are positive.
pub fn majority(votes: &[bool], quorum: usize) -> bool {
    votes.iter().filter(|&&v| v).count() >= quorum
}

/// Combines three member predictions for the same text: a category is
/// positive iff at least two members say so; the probability is the mean.
pub fn combine_value_votes(members: &[ValuePrediction]) -> Result<ValuePrediction> {
    if members.len() != 3 {
        return Err(Error::State(format!(
            "value ensemble needs 3 members, got {}",
            members.len()
        )));
    }
    let first = &members[0];
    let mut l2 = BTreeMap::new();
    for label in first.l2.keys() {
        let mut votes = Vec::with_capacity(3);
        let mut prob = 0.0;
        for m in members {
            let s = m.l2.get(label).ok_or_else(|| {
                Error::Dimension(format!("ensemble member lacks category `{label}`"))
            })?;
            votes.push(s.decision == 1);
            prob += s.prob;
        }
        l2.insert(
            label.clone(),
            L2Score {
                prob: prob / 3.0,
                decision: u8::from(majority(&votes, 2)),
            },
        );
    }
    Ok(ValuePrediction {
        text: first.text.clone(),
        l2,
    })
}

/// Majority ensemble of the classification, entailment and similarity
/// models.
pub fn ensemble_predict(texts: &[String], models: [&dyn ValuePredictor; 3]) -> Result<Vec<ValuePrediction>> {
    for m in models {
        require_trained(m)?;
    }
    let outputs = models
        .iter()
        .map(|m| m.predict(texts))
        .collect::<Result<Vec<_>>>()?;
    (0..texts.len())
        .map(|i| combine_value_votes(&[outputs[0][i].clone(), outputs[1][i].clone(), outputs[2][i].clone()]))
        .collect()
}

/// Metadata stored next to the weights of every value checkpoint.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model_type: String,
    pub taxonomy_hash: String,
    pub threshold: f64,
    pub training_config: TrainConfig,
    pub encoder: EncoderSpec,
    pub vocab: Vocab,
    #[serde(default)]
    pub train_log: Option<TrainLog>,
}

pub(crate) const WEIGHTS_FILE: &str = "weights.safetensors";
pub(crate) const META_FILE: &str = "meta.json";

pub(crate) fn save_checkpoint(dir: &Path, store: &ParamStore, meta: &CheckpointMeta) -> Result<()> {
    crate::artifact::ensure_dir(dir)?;
    store.save(&dir.join(WEIGHTS_FILE))?;
    write_json(&dir.join(META_FILE), meta)
}

pub(crate) fn load_meta(dir: &Path, expected_type: &str, taxonomy_hash: &str) -> Result<CheckpointMeta> {
    let meta: CheckpointMeta = read_json(&dir.join(META_FILE))?;
    if meta.model_type != expected_type {
        return Err(Error::Config(format!(
            "{} holds a `{}` model, expected `{expected_type}`",
            dir.display(),
            meta.model_type
        )));
    }
    if meta.taxonomy_hash != taxonomy_hash {
        return Err(Error::Config(format!(
            "{} was trained on a different taxonomy",
            dir.display()
        )));
    }
    Ok(meta)
}

/// Writes predictions as JSON Lines `{"text", "l2": {label: {prob, decision}}}`.
pub fn write_predictions(path: &Path, predictions: &[ValuePrediction]) -> Result<()> {
    crate::artifact::write_jsonl(path, predictions)
}
