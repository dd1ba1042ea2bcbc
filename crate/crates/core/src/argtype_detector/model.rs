//! Pair classifier over `[6 type tokens][BOS] hate [SEP][SEP] counter [EOS]`.
//!
//! The encoder states of the six type tokens and BOS pass through two
//! four-head self-attention layers; each type position feeds its own
//! linear head.

use std::path::Path;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::keywords::{mask_text, mask_text_all, TopicKeywordSet};
use super::{ArgType, ArgTypeLabel, LabeledPair, ARG_TYPE_COUNT};
use crate::artifact::{read_json, write_json};
use crate::corpus::Topic;
use crate::error::{Error, Result};
use crate::nn::ops::{bce_with_logits, sigmoid};
use crate::nn::{
    device, fit, pad_batch, EncoderSpec, LayerNorm, Linear, MultiHeadAttention, ParamStore,
    TextEncoder, TrainConfig, TrainLog, Vocab, BOS, EOS, SEP,
};
use crate::rng::derived;

const MODEL_TYPE: &str = "argtype";
const HEAD_POSITIONS: usize = ARG_TYPE_COUNT + 1;

/// One ensemble member: masking on or off, and an encoder family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArgTypeVariant {
    pub name: String,
    pub masked: bool,
    pub encoder: EncoderSpec,
}

impl ArgTypeVariant {
    /// Masked and non-masked variants of two encoder families.
    pub fn standard_four(first: &EncoderSpec, second: &EncoderSpec) -> Vec<ArgTypeVariant> {
        let mut out = Vec::with_capacity(4);
        for (family, spec) in [("a", first), ("b", second)] {
            for masked in [true, false] {
                out.push(ArgTypeVariant {
                    name: format!("{}-{family}", if masked { "masked" } else { "plain" }),
                    masked,
                    encoder: spec.clone(),
                });
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArgTypeConfig {
    pub train: TrainConfig,
    pub threshold: f64,
    pub attention_heads: usize,
}

impl Default for ArgTypeConfig {
    fn default() -> Self {
        ArgTypeConfig {
            train: TrainConfig::default(),
            threshold: 0.5,
            attention_heads: 4,
        }
    }
}

/// Token ids of one encoded pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairEncoding {
    pub ids: Vec<u32>,
}

impl PairEncoding {
    /// Encodes a pair, trimming the longer segment first to fit `max_len`.
    pub fn new(vocab: &Vocab, hate: &str, counter: &str, max_len: usize) -> Result<Self> {
        let fixed = HEAD_POSITIONS + 3;
        if max_len <= fixed {
            return Err(Error::Config(format!("max_len {max_len} leaves no room for text")));
        }
        let mut h = vocab.encode(hate);
        let mut c = vocab.encode(counter);
        while h.len() + c.len() > max_len - fixed {
            if h.len() >= c.len() {
                h.pop();
            } else {
                c.pop();
            }
        }
        let mut ids = Vec::with_capacity(h.len() + c.len() + fixed);
        for t in ArgType::ALL {
            ids.push(
                vocab
                    .id(&t.token())
                    .ok_or_else(|| Error::Config(format!("vocabulary lacks type token {}", t.token())))?,
            );
        }
        ids.push(vocab.special(BOS));
        ids.extend(h);
        ids.push(vocab.special(SEP));
        ids.push(vocab.special(SEP));
        ids.extend(c);
        ids.push(vocab.special(EOS));
        Ok(PairEncoding { ids })
    }
}

pub struct ArgTypeModel {
    variant: ArgTypeVariant,
    config: ArgTypeConfig,
    vocab: Vocab,
    keywords: Option<TopicKeywordSet>,
    store: ParamStore,
    encoder: TextEncoder,
    norms: Vec<LayerNorm>,
    attention: Vec<MultiHeadAttention>,
    heads: Vec<Linear>,
    trained: bool,
    log: Option<TrainLog>,
}

#[derive(Serialize, Deserialize)]
struct ArgTypeMeta {
    model_type: String,
    variant: ArgTypeVariant,
    config: ArgTypeConfig,
    vocab: Vocab,
    #[serde(default)]
    train_log: Option<TrainLog>,
}

impl ArgTypeModel {
    /// An untrained model. `vocab` is extended with the six type tokens.
    pub fn new(
        variant: ArgTypeVariant,
        config: ArgTypeConfig,
        mut vocab: Vocab,
        keywords: Option<TopicKeywordSet>,
    ) -> Result<Self> {
        if variant.masked && keywords.is_none() {
            return Err(Error::Config(format!("masked variant `{}` needs topic keywords", variant.name)));
        }
        let type_tokens: Vec<String> = ArgType::ALL.iter().map(|t| t.token()).collect();
        vocab.extend(&type_tokens);
        let mut rng = derived(config.train.seed, &format!("{MODEL_TYPE}-{}", variant.name));
        let mut store = ParamStore::new();
        let dim = variant.encoder.dim;
        let encoder = TextEncoder::new(&mut store, "encoder", &variant.encoder, vocab.len(), &mut rng)?;
        let mut norms = Vec::new();
        let mut attention = Vec::new();
        for i in 0..2 {
            norms.push(LayerNorm::new(&mut store, &format!("type_attn{i}.ln"), dim, &mut rng)?);
            attention.push(MultiHeadAttention::new(
                &mut store,
                &format!("type_attn{i}"),
                dim,
                config.attention_heads,
                &mut rng,
            )?);
        }
        let heads = ArgType::ALL
            .iter()
            .map(|t| Linear::new(&mut store, &format!("head.{}", t.name()), dim, 1, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(ArgTypeModel {
            variant,
            config,
            vocab,
            keywords,
            store,
            encoder,
            norms,
            attention,
            heads,
            trained: false,
            log: None,
        })
    }

    pub fn variant(&self) -> &ArgTypeVariant {
        &self.variant
    }

    pub fn config(&self) -> &ArgTypeConfig {
        &self.config
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn train_log(&self) -> Option<&TrainLog> {
        self.log.as_ref()
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    /// Applies the variant's masking to one text.
    pub fn prepare_text(&self, text: &str, topic: Option<Topic>) -> String {
        match (&self.keywords, self.variant.masked) {
            (Some(k), true) => match topic {
                Some(t) => mask_text(text, k, t),
                None => mask_text_all(text, k),
            },
            _ => text.to_string(),
        }
    }

    pub fn encode(&self, hate: &str, counter: &str, topic: Option<Topic>) -> Result<PairEncoding> {
        PairEncoding::new(
            &self.vocab,
            &self.prepare_text(hate, topic),
            &self.prepare_text(counter, topic),
            self.variant.encoder.max_len,
        )
    }

    /// Per-type logits `(batch, 6)`.
    pub fn logits(&self, ids: &[Vec<u32>]) -> Result<Tensor> {
        let (ids, mask) = pad_batch(ids)?;
        let hidden = self.encoder.hidden(&ids, &mask)?;
        let mut x = hidden.narrow(1, 0, HEAD_POSITIONS)?;
        for (ln, attn) in self.norms.iter().zip(&self.attention) {
            let h = ln.forward(&x)?;
            x = (&x + attn.forward(&h, &h, None)?)?;
        }
        let cols = self
            .heads
            .iter()
            .enumerate()
            .map(|(k, head)| head.forward(&x.narrow(1, k, 1)?.squeeze(1)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Tensor::cat(&cols, 1)?)
    }

    fn batch_loss(&self, ids: &[Vec<u32>], labels: &[[f32; ARG_TYPE_COUNT]], batch: &[usize]) -> Result<Tensor> {
        let x: Vec<Vec<u32>> = batch.iter().map(|&i| ids[i].clone()).collect();
        let y: Vec<f32> = batch.iter().flat_map(|&i| labels[i]).collect();
        let y = Tensor::from_vec(y, (batch.len(), ARG_TYPE_COUNT), &device())?;
        bce_with_logits(&self.logits(&x)?, &y)
    }

    fn mean_loss(&self, ids: &[Vec<u32>], labels: &[[f32; ARG_TYPE_COUNT]]) -> Result<f64> {
        let idx: Vec<usize> = (0..ids.len()).collect();
        let mut total = 0.0;
        for chunk in idx.chunks(64) {
            total += self.batch_loss(ids, labels, chunk)?.to_scalar::<f32>()? as f64 * chunk.len() as f64;
        }
        Ok(total / ids.len() as f64)
    }

    fn encode_labeled(&self, pairs: &[LabeledPair]) -> Result<(Vec<Vec<u32>>, Vec<[f32; ARG_TYPE_COUNT]>)> {
        let mut ids = Vec::with_capacity(pairs.len());
        let mut labels = Vec::with_capacity(pairs.len());
        for p in pairs {
            ids.push(self.encode(&p.hate, &p.counter, p.topic)?.ids);
            labels.push(p.label_vector()?.map(|b| if b { 1.0 } else { 0.0 }));
        }
        Ok((ids, labels))
    }

    pub fn train(&mut self, train: &[LabeledPair], validation: &[LabeledPair]) -> Result<TrainLog> {
        let (tx, ty) = self.encode_labeled(train)?;
        let (vx, vy) = if validation.is_empty() {
            log::warn!("no validation pairs; early stopping watches the training loss");
            (tx.clone(), ty.clone())
        } else {
            self.encode_labeled(validation)?
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

    /// Predictions for `(hate, counter, topic)` triples.
    pub fn predict(&self, pairs: &[(String, String, Option<Topic>)]) -> Result<Vec<ArgTypeLabel>> {
        if !self.trained {
            return Err(Error::State(format!("argtype variant `{}` is not trained", self.variant.name)));
        }
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(64) {
            let ids = chunk
                .iter()
                .map(|(h, c, t)| Ok(self.encode(h, c, *t)?.ids))
                .collect::<Result<Vec<_>>>()?;
            for row in sigmoid(&self.logits(&ids)?)?.to_vec2::<f32>()? {
                let probs: [f64; ARG_TYPE_COUNT] = std::array::from_fn(|k| f64::from(row[k]));
                out.push(ArgTypeLabel::from_probs(probs, self.config.threshold));
            }
        }
        Ok(out)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        if !self.trained {
            return Err(Error::State(format!("argtype variant `{}` is not trained", self.variant.name)));
        }
        crate::artifact::ensure_dir(dir)?;
        self.store.save(&dir.join("weights.safetensors"))?;
        if let Some(k) = &self.keywords {
            k.save(&dir.join("keywords.json"))?;
        }
        write_json(
            &dir.join("meta.json"),
            &ArgTypeMeta {
                model_type: MODEL_TYPE.into(),
                variant: self.variant.clone(),
                config: self.config.clone(),
                vocab: self.vocab.clone(),
                train_log: self.log.clone(),
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: ArgTypeMeta = read_json(&dir.join("meta.json"))?;
        if meta.model_type != MODEL_TYPE {
            return Err(Error::Config(format!("{} is not an argtype checkpoint", dir.display())));
        }
        let kw_path = dir.join("keywords.json");
        let keywords = if kw_path.exists() {
            Some(TopicKeywordSet::load(&kw_path)?)
        } else {
            None
        };
        let mut model = ArgTypeModel::new(meta.variant, meta.config, meta.vocab, keywords)?;
        model.store.load(&dir.join("weights.safetensors"))?;
        model.trained = true;
        model.log = meta.train_log;
        Ok(model)
    }
}

/// Builds the vocabulary from the (masked, if applicable) training texts
/// and trains one variant.
pub fn train_argtype_model(
    train: &[LabeledPair],
    validation: &[LabeledPair],
    variant: &ArgTypeVariant,
    config: &ArgTypeConfig,
    keywords: Option<&TopicKeywordSet>,
) -> Result<ArgTypeModel> {
    if train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    for p in train.iter().chain(validation) {
        p.label_vector()?;
    }
    let probe = ArgTypeModel::new(variant.clone(), config.clone(), Vocab::default(), keywords.cloned())?;
    let texts: Vec<String> = train
        .iter()
        .flat_map(|p| [probe.prepare_text(&p.hate, p.topic), probe.prepare_text(&p.counter, p.topic)])
        .collect();
    let vocab = Vocab::build(texts.iter().map(String::as_str), 1);
    let mut model = ArgTypeModel::new(variant.clone(), config.clone(), vocab, keywords.cloned())?;
    model.train(train, validation)?;
    Ok(model)
}
