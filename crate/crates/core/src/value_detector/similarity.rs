//! Similarity model. Step 1 embeds value descriptors with the quadruple
//! loss; the embeddings become fixed centroids. Step 2 trains an argument
//! embedder into the same space, and prediction picks the nearest centroid.

use std::path::Path;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::loss::{cosine_embedding_loss, quadruple_loss_tensor, QuadrupleLossConfig};
use super::{
    load_meta, require_trained, save_checkpoint, CheckpointMeta, L2Score, ValuePrediction,
    ValuePredictor, DEFAULT_THRESHOLD, WEIGHTS_FILE,
};
use crate::artifact::{read_json, write_json};
use crate::error::{Error, Result};
use crate::nn::ops::{cosine_rows, l2_normalize_rows};
use crate::nn::{device, fit, pad_batch, EncoderSpec, Linear, ParamStore, TextEncoder, TrainConfig, TrainLog, Vocab};
use crate::rng::derived;
use crate::taxonomy::{Quadruple, QuadrupleSet, SimilarityPair, ValueTaxonomy};

const DESCRIPTOR_TYPE: &str = "descriptor_embedder";
const MODEL_TYPE: &str = "similarity";
const CENTROIDS_FILE: &str = "centroids.json";

fn embedder_train_defaults() -> TrainConfig {
    TrainConfig::default().with_lr(2e-5).with_patience(5)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub encoder: EncoderSpec,
    pub train: TrainConfig,
    pub loss: QuadrupleLossConfig,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            encoder: EncoderSpec::tiny(),
            train: embedder_train_defaults(),
            loss: QuadrupleLossConfig::default(),
        }
    }
}

/// Unit-norm descriptor embeddings, one row per descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Centroids {
    pub dim: usize,
    pub vectors: Vec<Vec<f32>>,
}

impl Centroids {
    pub fn new(vectors: Vec<Vec<f32>>) -> Result<Self> {
        let dim = vectors.first().map_or(0, Vec::len);
        if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::Config("centroids must be non-empty and share one dimension".into()));
        }
        let vectors = vectors
            .into_iter()
            .map(|v| {
                let n = v.iter().map(|x| x * x).sum::<f32>().sqrt().max(1e-12);
                v.into_iter().map(|x| x / n).collect()
            })
            .collect();
        Ok(Centroids { dim, vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn tensor(&self) -> Result<Tensor> {
        let flat: Vec<f32> = self.vectors.iter().flatten().copied().collect();
        Ok(Tensor::from_vec(flat, (self.len(), self.dim), &device())?)
    }

    fn validate(&self, taxonomy: &ValueTaxonomy) -> Result<()> {
        if self.len() != taxonomy.descriptor_count() {
            return Err(Error::Config(format!(
                "{} centroids for {} descriptors",
                self.len(),
                taxonomy.descriptor_count()
            )));
        }
        if self.vectors.iter().any(|v| v.len() != self.dim) || self.dim == 0 {
            return Err(Error::Config(format!("centroids disagree with dimension {}", self.dim)));
        }
        Ok(())
    }
}

pub struct DescriptorEmbedder {
    vocab: Vocab,
    config: EmbedderConfig,
    store: ParamStore,
    encoder: TextEncoder,
    trained: bool,
    log: Option<TrainLog>,
}

impl DescriptorEmbedder {
    pub fn new(vocab: Vocab, config: EmbedderConfig) -> Result<Self> {
        let mut rng = derived(config.train.seed, DESCRIPTOR_TYPE);
        let mut store = ParamStore::new();
        let encoder = TextEncoder::new(&mut store, "encoder", &config.encoder, vocab.len(), &mut rng)?;
        Ok(DescriptorEmbedder {
            vocab,
            config,
            store,
            encoder,
            trained: false,
            log: None,
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.config
    }

    pub fn train_log(&self) -> Option<&TrainLog> {
        self.log.as_ref()
    }

    /// Pooled embeddings `(n, dim)`.
    pub fn embed(&self, texts: &[&str]) -> Result<Tensor> {
        let ids: Vec<Vec<u32>> = texts
            .iter()
            .map(|t| self.vocab.encode_single(t, self.config.encoder.max_len))
            .collect();
        let (ids, mask) = pad_batch(&ids)?;
        self.encoder.pooled(&ids, &mask)
    }

    fn quad_loss(&self, taxonomy: &ValueTaxonomy, quads: &[Quadruple]) -> Result<Tensor> {
        let n = quads.len();
        let mut texts = Vec::with_capacity(4 * n);
        for slot in 0..4 {
            for q in quads {
                let d = [q.anchor, q.positive, q.easy_negative, q.hard_negative][slot];
                texts.push(taxonomy.descriptor(d));
            }
        }
        let e = self.embed(&texts)?;
        let part = |k: usize| e.narrow(0, k * n, n);
        quadruple_loss_tensor(&part(0)?, &part(1)?, &part(2)?, &part(3)?, &self.config.loss)
    }

    fn mean_loss(&self, taxonomy: &ValueTaxonomy, quads: &[Quadruple]) -> Result<f64> {
        let mut total = 0.0;
        for chunk in quads.chunks(64) {
            total += self.quad_loss(taxonomy, chunk)?.to_scalar::<f32>()? as f64 * chunk.len() as f64;
        }
        Ok(total / quads.len() as f64)
    }

    pub fn train(&mut self, taxonomy: &ValueTaxonomy, quadruples: &QuadrupleSet) -> Result<TrainLog> {
        let train = &quadruples.train;
        let val = if quadruples.validation.is_empty() {
            log::warn!("no validation quadruples; early stopping watches the training loss");
            &quadruples.train
        } else {
            &quadruples.validation
        };
        let log = fit(
            &self.store,
            &self.config.train,
            train.len(),
            |batch| {
                let qs: Vec<Quadruple> = batch.iter().map(|&i| train[i]).collect();
                self.quad_loss(taxonomy, &qs)
            },
            || self.mean_loss(taxonomy, val),
        )?;
        self.trained = true;
        self.log = Some(log.clone());
        Ok(log)
    }

    /// Embeds every descriptor of the taxonomy; the result is frozen.
    pub fn centroids(&self, taxonomy: &ValueTaxonomy) -> Result<Centroids> {
        if !self.trained {
            return Err(Error::State("descriptor embedder is not trained".into()));
        }
        let texts: Vec<&str> = (0..taxonomy.descriptor_count()).map(|d| taxonomy.descriptor(d)).collect();
        let mut rows = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(128) {
            rows.extend(self.embed(chunk)?.to_vec2::<f32>()?);
        }
        Centroids::new(rows)
    }

    pub fn save(&self, dir: &Path, taxonomy: &ValueTaxonomy) -> Result<()> {
        if !self.trained {
            return Err(Error::State("descriptor embedder is not trained".into()));
        }
        save_checkpoint(
            dir,
            &self.store,
            &CheckpointMeta {
                model_type: DESCRIPTOR_TYPE.into(),
                taxonomy_hash: taxonomy.content_hash(),
                threshold: DEFAULT_THRESHOLD,
                training_config: self.config.train.clone(),
                encoder: self.config.encoder.clone(),
                vocab: self.vocab.clone(),
                train_log: self.log.clone(),
            },
        )?;
        write_json(&dir.join("loss.json"), &self.config.loss)?;
        write_json(&dir.join(CENTROIDS_FILE), &self.centroids(taxonomy)?)
    }

    pub fn load(dir: &Path, taxonomy: &ValueTaxonomy) -> Result<Self> {
        let meta = load_meta(dir, DESCRIPTOR_TYPE, &taxonomy.content_hash())?;
        let config = EmbedderConfig {
            encoder: meta.encoder,
            train: meta.training_config,
            loss: read_json(&dir.join("loss.json"))?,
        };
        let mut model = DescriptorEmbedder::new(meta.vocab, config)?;
        model.store.load(&dir.join(WEIGHTS_FILE))?;
        model.trained = true;
        model.log = meta.train_log;
        Ok(model)
    }
}

/// Trains Step 1 and returns the embedder with its frozen centroids.
pub fn train_descriptor_embedder(
    taxonomy: &ValueTaxonomy,
    quadruples: &QuadrupleSet,
    vocab: Vocab,
    config: &EmbedderConfig,
) -> Result<(DescriptorEmbedder, Centroids)> {
    if quadruples.train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let mut embedder = DescriptorEmbedder::new(vocab, config.clone())?;
    embedder.train(taxonomy, quadruples)?;
    let centroids = embedder.centroids(taxonomy)?;
    Ok((embedder, centroids))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArgumentEmbedderConfig {
    pub encoder: EncoderSpec,
    /// Width of the two hidden fully-connected layers.
    pub hidden: usize,
    pub train: TrainConfig,
    /// Start the argument encoder from the Step 1 encoder weights.
    pub init_from_descriptor_encoder: bool,
}

impl Default for ArgumentEmbedderConfig {
    fn default() -> Self {
        ArgumentEmbedderConfig {
            encoder: EncoderSpec::tiny(),
            hidden: 64,
            train: embedder_train_defaults(),
            init_from_descriptor_encoder: true,
        }
    }
}

/// Fixed descriptor centroids plus a trained argument embedder.
pub struct EmbeddingSpace {
    taxonomy: ValueTaxonomy,
    vocab: Vocab,
    config: ArgumentEmbedderConfig,
    centroids: Centroids,
    centroid_tensor: Tensor,
    store: ParamStore,
    encoder: TextEncoder,
    fc: [Linear; 3],
    trained: bool,
    log: Option<TrainLog>,
}

impl EmbeddingSpace {
    pub fn new(
        taxonomy: ValueTaxonomy,
        vocab: Vocab,
        centroids: Centroids,
        config: ArgumentEmbedderConfig,
    ) -> Result<Self> {
        centroids.validate(&taxonomy)?;
        let mut rng = derived(config.train.seed, MODEL_TYPE);
        let mut store = ParamStore::new();
        let encoder = TextEncoder::new(&mut store, "encoder", &config.encoder, vocab.len(), &mut rng)?;
        let dim = config.encoder.dim;
        let fc = [
            Linear::new(&mut store, "fc1", dim, config.hidden, &mut rng)?,
            Linear::new(&mut store, "fc2", config.hidden, config.hidden, &mut rng)?,
            Linear::new(&mut store, "fc3", config.hidden, centroids.dim, &mut rng)?,
        ];
        Ok(EmbeddingSpace {
            centroid_tensor: centroids.tensor()?,
            taxonomy,
            vocab,
            config,
            centroids,
            store,
            encoder,
            fc,
            trained: false,
            log: None,
        })
    }

    pub fn centroids(&self) -> &Centroids {
        &self.centroids
    }

    pub fn taxonomy(&self) -> &ValueTaxonomy {
        &self.taxonomy
    }

    pub fn train_log(&self) -> Option<&TrainLog> {
        self.log.as_ref()
    }

    /// Argument embeddings `(n, centroid_dim)`.
    pub fn embed(&self, texts: &[&str]) -> Result<Tensor> {
        let ids: Vec<Vec<u32>> = texts
            .iter()
            .map(|t| self.vocab.encode_single(t, self.config.encoder.max_len))
            .collect();
        let (ids, mask) = pad_batch(&ids)?;
        let pooled = self.encoder.pooled(&ids, &mask)?;
        let h = self.fc[0].forward(&pooled)?.relu()?;
        let h = self.fc[1].forward(&h)?.relu()?;
        self.fc[2].forward(&h)
    }

    fn pair_loss(&self, pairs: &[&SimilarityPair]) -> Result<Tensor> {
        let texts: Vec<&str> = pairs.iter().map(|p| p.argument.as_str()).collect();
        let e = self.embed(&texts)?;
        let idx: Vec<u32> = pairs.iter().map(|p| p.descriptor as u32).collect();
        let idx = Tensor::from_vec(idx, pairs.len(), &device())?;
        let targets = self.centroid_tensor.index_select(&idx, 0)?;
        let labels: Vec<f32> = pairs.iter().map(|p| if p.label { 1.0 } else { 0.0 }).collect();
        let labels = Tensor::from_vec(labels, pairs.len(), &device())?;
        cosine_embedding_loss(&e, &targets, &labels)
    }

    fn mean_loss(&self, pairs: &[SimilarityPair]) -> Result<f64> {
        let mut total = 0.0;
        for chunk in pairs.chunks(64) {
            let refs: Vec<&SimilarityPair> = chunk.iter().collect();
            total += self.pair_loss(&refs)?.to_scalar::<f32>()? as f64 * chunk.len() as f64;
        }
        Ok(total / pairs.len() as f64)
    }

    pub fn train(&mut self, train: &[SimilarityPair], validation: &[SimilarityPair]) -> Result<TrainLog> {
        let n_desc = self.taxonomy.descriptor_count();
        if let Some(p) = train.iter().chain(validation).find(|p| p.descriptor >= n_desc) {
            return Err(Error::Schema(format!("descriptor index {} out of range", p.descriptor)));
        }
        let val = if validation.is_empty() {
            log::warn!("no validation pairs; early stopping watches the training loss");
            train
        } else {
            validation
        };
        let log = fit(
            &self.store,
            &self.config.train,
            train.len(),
            |batch| self.pair_loss(&batch.iter().map(|&i| &train[i]).collect::<Vec<_>>()),
            || self.mean_loss(val),
        )?;
        self.trained = true;
        self.log = Some(log.clone());
        Ok(log)
    }

    /// Cosine similarity of the argument to every centroid.
    pub fn scores(&self, argument: &str) -> Result<Vec<f64>> {
        require_trained(self)?;
        let e = l2_normalize_rows(&self.embed(&[argument])?)?;
        let sims = e.matmul(&self.centroid_tensor.t()?)?.squeeze(0)?;
        Ok(sims.to_vec1::<f32>()?.into_iter().map(f64::from).collect())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        require_trained(self)?;
        save_checkpoint(
            dir,
            &self.store,
            &CheckpointMeta {
                model_type: MODEL_TYPE.into(),
                taxonomy_hash: self.taxonomy.content_hash(),
                threshold: DEFAULT_THRESHOLD,
                training_config: self.config.train.clone(),
                encoder: self.config.encoder.clone(),
                vocab: self.vocab.clone(),
                train_log: self.log.clone(),
            },
        )?;
        write_json(&dir.join("embedder.json"), &self.config)?;
        write_json(&dir.join(CENTROIDS_FILE), &self.centroids)
    }

    pub fn load(dir: &Path, taxonomy: ValueTaxonomy) -> Result<Self> {
        let meta = load_meta(dir, MODEL_TYPE, &taxonomy.content_hash())?;
        let config: ArgumentEmbedderConfig = read_json(&dir.join("embedder.json"))?;
        let centroids: Centroids = read_json(&dir.join(CENTROIDS_FILE))?;
        let mut space = EmbeddingSpace::new(taxonomy, meta.vocab, centroids, config)?;
        space.store.load(&dir.join(WEIGHTS_FILE))?;
        space.trained = true;
        space.log = meta.train_log;
        Ok(space)
    }
}

/// Trains Step 2 against frozen centroids. The argument encoder starts
/// from the descriptor encoder when configured, which requires the two
/// encoder specs to agree.
pub fn train_argument_embedder(
    taxonomy: &ValueTaxonomy,
    train: &[SimilarityPair],
    validation: &[SimilarityPair],
    descriptor: &DescriptorEmbedder,
    centroids: &Centroids,
    config: &ArgumentEmbedderConfig,
) -> Result<EmbeddingSpace> {
    if train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    if config.init_from_descriptor_encoder && config.encoder != descriptor.config.encoder {
        return Err(Error::Config(format!(
            "argument encoder `{}` does not match descriptor encoder `{}`",
            config.encoder, descriptor.config.encoder
        )));
    }
    let mut space = EmbeddingSpace::new(
        taxonomy.clone(),
        descriptor.vocab.clone(),
        centroids.clone(),
        config.clone(),
    )?;
    if config.init_from_descriptor_encoder {
        space.store.copy_prefix_from(&descriptor.store, "encoder.", "encoder.")?;
    }
    space.train(train, validation)?;
    Ok(space)
}

/// Single-label L2 decision from descriptor similarities: the parent of the
/// most similar descriptor is positive with probability `(s + 1) / 2`;
/// every other category gets 0.
pub fn similarity_from_scores(taxonomy: &ValueTaxonomy, scores: &[f64]) -> Result<Vec<L2Score>> {
    if scores.len() != taxonomy.descriptor_count() || scores.is_empty() {
        return Err(Error::Dimension(format!(
            "{} scores for {} descriptors",
            scores.len(),
            taxonomy.descriptor_count()
        )));
    }
    let mut best = 0;
    for (d, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = d;
        }
    }
    let winner = taxonomy.descriptor_l2(best);
    Ok((0..taxonomy.l2_count())
        .map(|c| {
            if c == winner {
                L2Score {
                    prob: ((scores[best] + 1.0) / 2.0).clamp(0.0, 1.0),
                    decision: 1,
                }
            } else {
                L2Score {
                    prob: 0.0,
                    decision: 0,
                }
            }
        })
        .collect())
}

pub fn predict_similarity(argument: &str, space: &EmbeddingSpace) -> Result<ValuePrediction> {
    let scores = space.scores(argument)?;
    let l2 = similarity_from_scores(&space.taxonomy, &scores)?;
    Ok(ValuePrediction {
        text: argument.to_string(),
        l2: space.taxonomy.l2_names().map(str::to_string).zip(l2).collect(),
    })
}

impl ValuePredictor for EmbeddingSpace {
    fn model_type(&self) -> &'static str {
        MODEL_TYPE
    }

    fn is_trained(&self) -> bool {
        self.trained
    }

    fn predict(&self, texts: &[String]) -> Result<Vec<ValuePrediction>> {
        texts.iter().map(|t| predict_similarity(t, self)).collect()
    }
}

/// Mean pairwise cosine similarity between descriptor embeddings, split
/// into pairs sharing an L1 value and pairs from different L2 categories.
pub fn centroid_cohesion(taxonomy: &ValueTaxonomy, centroids: &Centroids) -> Result<(f64, f64)> {
    let t = centroids.tensor()?;
    let n = centroids.len();
    let mut within = (0.0, 0usize);
    let mut across = (0.0, 0usize);
    for i in 0..n {
        for j in (i + 1)..n {
            let a = t.narrow(0, i, 1)?;
            let b = t.narrow(0, j, 1)?;
            let c = cosine_rows(&a, &b)?.squeeze(0)?.to_scalar::<f32>()? as f64;
            if taxonomy.descriptor_l1(i) == taxonomy.descriptor_l1(j) {
                within = (within.0 + c, within.1 + 1);
            } else if taxonomy.descriptor_l2(i) != taxonomy.descriptor_l2(j) {
                across = (across.0 + c, across.1 + 1);
            }
        }
    }
    Ok((within.0 / within.1.max(1) as f64, across.0 / across.1.max(1) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_aggregation_has_one_winner() {
        let tax = ValueTaxonomy::toy();
        let mut scores = vec![-0.2; tax.descriptor_count()];
        scores[5] = 0.6;
        let l2 = similarity_from_scores(&tax, &scores).unwrap();
        assert_eq!(l2.iter().filter(|s| s.decision == 1).count(), 1);
        assert_eq!(l2[tax.descriptor_l2(5)].decision, 1);
        assert!((l2[tax.descriptor_l2(5)].prob - 0.8).abs() < 1e-12);
    }

    #[test]
    fn centroids_are_unit_norm_and_checked() {
        let c = Centroids::new(vec![vec![3.0, 4.0], vec![0.0, 2.0]]).unwrap();
        assert!((c.vectors[0][0] - 0.6).abs() < 1e-6);
        assert!(Centroids::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(matches!(c.validate(&ValueTaxonomy::toy()), Err(Error::Config(_))));
    }
}
