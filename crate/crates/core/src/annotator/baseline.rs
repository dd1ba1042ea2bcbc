//! Trainable stand-in for the external Big-5 and scheme classifiers: text
//! encoder, one linear head over the family's codes, softmax.

use std::path::Path;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{merge_scheme_labels, ClassifierPort, PortInput};
use crate::artifact::{ensure_dir, read_json, write_json};
use crate::error::{Error, Result};
use crate::features::{ControlCode, FeatureFamily, FeatureSet};
use crate::nn::ops::masked_cross_entropy;
use crate::nn::{device, fit, pad_batch, EncoderSpec, Linear, ParamStore, TextEncoder, TrainConfig, TrainLog, Vocab};
use crate::rng::derived;

/// Training record `{"text", "label"}`. Scheme labels may be given raw and
/// are merged onto the four codes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledText {
    pub text: String,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub encoder: EncoderSpec,
    pub train: TrainConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            encoder: EncoderSpec::tiny(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct BaselineMeta {
    family: FeatureFamily,
    config: BaselineConfig,
    vocab: Vocab,
    train_log: Option<TrainLog>,
}

pub struct BaselinePort {
    family: FeatureFamily,
    codes: Vec<ControlCode>,
    config: BaselineConfig,
    vocab: Vocab,
    store: ParamStore,
    encoder: TextEncoder,
    head: Linear,
    log: Option<TrainLog>,
    name: String,
}

fn parse_label(family: FeatureFamily, raw: &str) -> Result<ControlCode> {
    let code = match raw.parse::<ControlCode>() {
        Ok(c) => c,
        Err(_) if family == FeatureFamily::ArgSch => merge_scheme_labels(raw)?,
        Err(e) => return Err(e),
    };
    if code.family() != family {
        return Err(Error::Schema(format!("label `{raw}` is outside family {family}")));
    }
    Ok(code)
}

impl BaselinePort {
    pub fn new(family: FeatureFamily, vocab: Vocab, config: BaselineConfig) -> Result<Self> {
        if !family.is_single_label() {
            return Err(Error::Config(format!("the softmax baseline covers single-label families, not {family}")));
        }
        let codes: Vec<ControlCode> = family.codes().collect();
        let mut rng = derived(config.train.seed, &format!("baseline-{family}"));
        let mut store = ParamStore::new();
        let encoder = TextEncoder::new(&mut store, "encoder", &config.encoder, vocab.len(), &mut rng)?;
        let head = Linear::new(&mut store, "head", config.encoder.dim, codes.len(), &mut rng)?;
        Ok(BaselinePort {
            name: format!("baseline-{family}"),
            family,
            codes,
            config,
            vocab,
            store,
            encoder,
            head,
            log: None,
        })
    }

    pub fn train_log(&self) -> Option<&TrainLog> {
        self.log.as_ref()
    }

    fn logits(&self, texts: &[&str]) -> Result<Tensor> {
        let ids: Vec<Vec<u32>> = texts
            .iter()
            .map(|t| self.vocab.encode_single(t, self.config.encoder.max_len))
            .collect();
        let (ids, mask) = pad_batch(&ids)?;
        self.head.forward(&self.encoder.pooled(&ids, &mask)?)
    }

    fn loss(&self, texts: &[&str], targets: &[u32]) -> Result<Tensor> {
        let logits = self.logits(texts)?;
        let dev = device();
        let t = Tensor::from_slice(targets, targets.len(), &dev)?;
        let w = Tensor::ones(targets.len(), candle_core::DType::F32, &dev)?;
        masked_cross_entropy(&logits, &t, &w)
    }

    fn targets(&self, data: &[LabeledText]) -> Result<Vec<u32>> {
        data.iter()
            .map(|d| {
                let code = parse_label(self.family, &d.label)?;
                Ok(self.codes.iter().position(|&c| c == code).expect("family code") as u32)
            })
            .collect()
    }

    pub fn train(&mut self, train: &[LabeledText], validation: &[LabeledText]) -> Result<TrainLog> {
        let ty = self.targets(train)?;
        let tx: Vec<&str> = train.iter().map(|d| d.text.as_str()).collect();
        let (vx, vy) = if validation.is_empty() {
            (tx.clone(), ty.clone())
        } else {
            (validation.iter().map(|d| d.text.as_str()).collect(), self.targets(validation)?)
        };
        let log = fit(
            &self.store,
            &self.config.train,
            tx.len(),
            |batch| {
                let x: Vec<&str> = batch.iter().map(|&i| tx[i]).collect();
                let y: Vec<u32> = batch.iter().map(|&i| ty[i]).collect();
                self.loss(&x, &y)
            },
            || {
                let mut total = 0.0;
                for (x, y) in vx.chunks(64).zip(vy.chunks(64)) {
                    total += self.loss(x, y)?.to_scalar::<f32>()? as f64 * x.len() as f64;
                }
                Ok(total / vx.len() as f64)
            },
        )?;
        self.log = Some(log.clone());
        Ok(log)
    }

    pub fn predict_texts(&self, texts: &[&str]) -> Result<Vec<ControlCode>> {
        if self.log.is_none() {
            return Err(Error::State(format!("{} is not trained", self.name)));
        }
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(64) {
            for row in self.logits(chunk)?.to_vec2::<f32>()? {
                let best = row
                    .iter()
                    .enumerate()
                    .fold(0, |best, (i, &v)| if v > row[best] { i } else { best });
                out.push(self.codes[best]);
            }
        }
        Ok(out)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        if self.log.is_none() {
            return Err(Error::State(format!("{} is not trained", self.name)));
        }
        ensure_dir(dir)?;
        self.store.save(&dir.join("weights.safetensors"))?;
        write_json(
            &dir.join("meta.json"),
            &BaselineMeta {
                family: self.family,
                config: self.config.clone(),
                vocab: self.vocab.clone(),
                train_log: self.log.clone(),
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: BaselineMeta = read_json(&dir.join("meta.json"))?;
        let mut port = BaselinePort::new(meta.family, meta.vocab, meta.config)?;
        port.store.load(&dir.join("weights.safetensors"))?;
        port.log = Some(meta.train_log.unwrap_or_default());
        port.name = format!("baseline-{}@{}", meta.family, dir.display());
        Ok(port)
    }
}

impl ClassifierPort for BaselinePort {
    fn name(&self) -> &str {
        &self.name
    }

    fn family(&self) -> FeatureFamily {
        self.family
    }

    fn predict(&self, input: &PortInput<'_>) -> Result<FeatureSet> {
        Ok(self.predict_texts(&[input.target()])?.into_iter().collect())
    }

    fn predict_batch(&self, inputs: &[PortInput<'_>]) -> Result<Vec<FeatureSet>> {
        let texts: Vec<&str> = inputs.iter().map(|i| i.target()).collect();
        Ok(self
            .predict_texts(&texts)?
            .into_iter()
            .map(|c| FeatureSet::from([c]))
            .collect())
    }

    fn metadata(&self) -> serde_json::Value {
        json!({ "kind": "baseline", "encoder": self.config.encoder, "train": self.config.train })
    }
}

/// Builds the vocabulary from the training texts and trains a baseline.
pub fn train_baseline_port(
    family: FeatureFamily,
    train: &[LabeledText],
    validation: &[LabeledText],
    config: &BaselineConfig,
) -> Result<BaselinePort> {
    if train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let vocab = Vocab::build(train.iter().map(|d| d.text.as_str()), 1);
    let mut port = BaselinePort::new(family, vocab, config.clone())?;
    port.train(train, validation)?;
    Ok(port)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_scheme_labels_are_merged() {
        assert_eq!(parse_label(FeatureFamily::ArgSch, "Source Authority").unwrap(), ControlCode::FromSourceAuthorityKnowledge);
        assert!(parse_label(FeatureFamily::Big5, "Source Authority").is_err());
        assert!(parse_label(FeatureFamily::Big5, "facts").is_err());
    }

    #[test]
    fn learns_a_planted_cue() {
        let words = ["calm", "wild", "tidy", "warm", "open"];
        let codes = ["neuroticism", "extraversion", "conscientiousness", "agreeableness", "openness"];
        let data: Vec<LabeledText> = (0..100)
            .map(|i| LabeledText {
                text: format!("some filler {} text here", words[i % 5]),
                label: codes[i % 5].into(),
            })
            .collect();
        let cfg = BaselineConfig {
            train: TrainConfig {
                learning_rate: 1e-3,
                max_steps: Some(150),
                patience: 1000,
                ..Default::default()
            },
            ..Default::default()
        };
        let port = train_baseline_port(FeatureFamily::Big5, &data, &[], &cfg).unwrap();
        let pred = port.predict_texts(&["filler wild", "tidy text"]).unwrap();
        assert_eq!(pred, vec![ControlCode::Extraversion, ControlCode::Conscientiousness]);
        assert!(BaselinePort::new(FeatureFamily::HumVal, Vocab::default(), cfg).is_err());
    }
}
