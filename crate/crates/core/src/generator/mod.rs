//! Control-code conditioned response generation.
//!
//! Features present only in the query prefix the encoder input; features
//! present only in the response prefix the decoder input. Shared features
//! cancel out.

mod decode;
mod model;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use candle_core::{DType, Tensor};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use decode::{beam_search, greedy_decode, Hypothesis};
pub use model::{Memory, Seq2Seq, Seq2SeqSpec};

use crate::annotator::AnnotatedCorpus;
use crate::artifact::{ensure_dir, read_json, write_json};
use crate::error::{Error, Result};
use crate::features::{filter_families, ControlCode, FeatureFamily, FeatureSet};
use crate::nn::ops::{gold_log_probs, masked_cross_entropy};
use crate::nn::{device, fit, pad_batch, ParamStore, TrainConfig, TrainLog, Vocab, BOS, CLS, EOS, PAD, SEP};
use crate::rng::{derived, seeded};
use crate::text::detokenize;

pub const HATE_MARKER: &str = "<hateSpeech>";
pub const COUNTER_MARKER: &str = "<counterSpeech>";

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodePlacement {
    pub encoder_codes: FeatureSet,
    pub decoder_codes: FeatureSet,
}

pub fn feature_delta(query: &FeatureSet, response: &FeatureSet) -> CodePlacement {
    CodePlacement {
        encoder_codes: query.difference(response).copied().collect(),
        decoder_codes: response.difference(query).copied().collect(),
    }
}

/// Parses code names; anything outside the vocabulary is a schema error.
pub fn parse_feature_set<S: AsRef<str>>(names: &[S]) -> Result<FeatureSet> {
    names.iter().map(|n| n.as_ref().parse()).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodePosition {
    /// `[codes][BOS] response`
    #[default]
    BeforeBos,
    /// `[BOS][codes] response`
    AfterBos,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceCodes {
    /// Decoder codes are the desired codes minus the query's features.
    #[default]
    Delta,
    /// Decoder codes are the desired codes as given.
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub families: BTreeSet<FeatureFamily>,
    pub beam_width: usize,
    pub max_source_len: usize,
    pub max_target_len: usize,
    /// Most recent context turns kept; `None` keeps all that fit.
    pub context_turns: Option<usize>,
    pub code_position: CodePosition,
    pub inference_codes: InferenceCodes,
    pub model: Seq2SeqSpec,
    pub train: TrainConfig,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            families: BTreeSet::new(),
            beam_width: 5,
            max_source_len: 512,
            max_target_len: 128,
            context_turns: None,
            code_position: CodePosition::BeforeBos,
            inference_codes: InferenceCodes::Delta,
            model: Seq2SeqSpec::default(),
            train: TrainConfig::default(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::Config("beam_width must be at least 1".into()));
        }
        if self.max_source_len < 2 || self.max_target_len < 2 {
            return Err(Error::Config("max lengths must be at least 2".into()));
        }
        Ok(())
    }

    /// Codes of the active families in canonical order.
    pub fn active_codes(&self) -> Vec<ControlCode> {
        ControlCode::ALL
            .into_iter()
            .filter(|c| self.families.contains(&c.family()))
            .collect()
    }
}

/// One generation unit with the annotated features of both sides.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedExample {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub context: Vec<(String, String)>,
    pub query: String,
    pub response: String,
    pub query_features: FeatureSet,
    pub response_features: FeatureSet,
}

impl AnnotatedExample {
    /// Filters both feature sets to `families`, then takes the delta.
    pub fn placement(&self, families: &BTreeSet<FeatureFamily>) -> CodePlacement {
        feature_delta(
            &filter_families(&self.query_features, families),
            &filter_families(&self.response_features, families),
        )
    }
}

/// One example per turn, all earlier turns of the dialogue as context.
pub fn annotated_examples(corpus: &AnnotatedCorpus) -> Vec<AnnotatedExample> {
    let mut out = Vec::with_capacity(corpus.turn_count());
    for d in &corpus.dialogues {
        let mut context = Vec::new();
        for (i, t) in d.turns.iter().enumerate() {
            out.push(AnnotatedExample {
                dialogue_id: d.dialogue_id.clone(),
                turn_index: i,
                context: context.clone(),
                query: t.hate_text.clone(),
                response: t.counter_text.clone(),
                query_features: t.hate_features.clone(),
                response_features: t.counter_features.clone(),
            });
            context.push((t.hate_text.clone(), t.counter_text.clone()));
        }
    }
    out
}

/// Splits by dialogue so that no dialogue straddles the split.
pub fn split_examples(
    examples: &[AnnotatedExample],
    validation_fraction: f64,
    seed: u64,
) -> (Vec<AnnotatedExample>, Vec<AnnotatedExample>) {
    let mut ids: Vec<&str> = examples.iter().map(|e| e.dialogue_id.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    ids.shuffle(&mut seeded(seed));
    let n_val = ((ids.len() as f64 * validation_fraction).round() as usize).min(ids.len().saturating_sub(1));
    let val: BTreeSet<&str> = ids[..n_val].iter().copied().collect();
    let (v, t): (Vec<_>, Vec<_>) = examples.iter().cloned().partition(|e| val.contains(e.dialogue_id.as_str()));
    (t, v)
}

/// Token ids of one example. `target_ids` is `decoder_input_ids` shifted
/// left with EOS appended; `target_mask` is 0 on positions whose target is
/// a code token or BOS.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorBatch {
    pub encoder_ids: Vec<u32>,
    pub decoder_input_ids: Vec<u32>,
    pub target_ids: Vec<u32>,
    pub target_mask: Vec<f32>,
}

/// Vocabulary ids and length limits used to lay out sequences.
pub struct Layout<'a> {
    pub vocab: &'a Vocab,
    pub max_source_len: usize,
    pub max_target_len: usize,
    pub context_turns: Option<usize>,
    pub code_position: CodePosition,
}

impl Layout<'_> {
    fn code_ids(&self, codes: &FeatureSet) -> Result<Vec<u32>> {
        codes
            .iter()
            .map(|c| {
                self.vocab
                    .id(&c.token())
                    .ok_or_else(|| Error::Config(format!("code token {} is not in the vocabulary", c.token())))
            })
            .collect()
    }

    /// `[codes][<hateSpeech> h <counterSpeech> c]... <hateSpeech> query`,
    /// dropping the oldest context turns first and cutting the query tail
    /// only when it cannot fit on its own.
    pub fn encoder_ids(&self, codes: &FeatureSet, context: &[(String, String)], query: &str) -> Result<Vec<u32>> {
        let mut ids = self.code_ids(codes)?;
        let hate = self.vocab.special(HATE_MARKER);
        let counter = self.vocab.special(COUNTER_MARKER);
        let mut q = vec![hate];
        q.extend(self.vocab.encode(query));
        let room = self.max_source_len.saturating_sub(ids.len());
        if room < 2 {
            return Err(Error::Config(format!(
                "max_source_len {} leaves no room for the query after {} codes",
                self.max_source_len,
                ids.len()
            )));
        }
        if q.len() > room {
            log::warn!("query of {} tokens truncated to {room}", q.len() - 1);
            q.truncate(room);
        }
        let window = self.context_turns.map_or(context.len(), |n| n.min(context.len()));
        let mut turns: Vec<Vec<u32>> = context[context.len() - window..]
            .iter()
            .map(|(h, c)| {
                let mut t = vec![hate];
                t.extend(self.vocab.encode(h));
                t.push(counter);
                t.extend(self.vocab.encode(c));
                t
            })
            .collect();
        let budget = room - q.len();
        let mut used: usize = turns.iter().map(Vec::len).sum();
        while used > budget {
            used -= turns.remove(0).len();
        }
        for t in turns {
            ids.extend(t);
        }
        ids.extend(q);
        Ok(ids)
    }

    /// Decoder prefix: codes and BOS in the configured order.
    pub fn decoder_prefix(&self, codes: &FeatureSet) -> Result<Vec<u32>> {
        let codes = self.code_ids(codes)?;
        let bos = self.vocab.special(BOS);
        Ok(match self.code_position {
            CodePosition::BeforeBos => codes.into_iter().chain([bos]).collect(),
            CodePosition::AfterBos => [bos].into_iter().chain(codes).collect(),
        })
    }
}

/// Lays out one example under `placement`, after dropping codes outside
/// `families`.
pub fn build_training_batch(
    example: &AnnotatedExample,
    placement: &CodePlacement,
    families: &BTreeSet<FeatureFamily>,
    layout: &Layout<'_>,
) -> Result<GeneratorBatch> {
    let enc_codes = filter_families(&placement.encoder_codes, families);
    let dec_codes = filter_families(&placement.decoder_codes, families);
    let encoder_ids = layout.encoder_ids(&enc_codes, &example.context, &example.query)?;
    let prefix = layout.decoder_prefix(&dec_codes)?;
    if prefix.len() >= layout.max_target_len {
        return Err(Error::Config(format!(
            "max_target_len {} leaves no room for the response",
            layout.max_target_len
        )));
    }
    let mut response = layout.vocab.encode(&example.response);
    response.truncate(layout.max_target_len - prefix.len());
    let k = prefix.len() - 1;
    let decoder_input_ids: Vec<u32> = prefix.into_iter().chain(response).collect();
    let target_ids: Vec<u32> = decoder_input_ids[1..]
        .iter()
        .copied()
        .chain([layout.vocab.special(EOS)])
        .collect();
    let target_mask = (0..target_ids.len()).map(|i| if i >= k { 1.0 } else { 0.0 }).collect();
    Ok(GeneratorBatch {
        encoder_ids,
        decoder_input_ids,
        target_ids,
        target_mask,
    })
}

/// JSON request for a single generation.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    #[serde(default)]
    pub context: Vec<(String, String)>,
    pub query: String,
    #[serde(default)]
    pub codes: Vec<String>,
    /// Features of the query, if known; used for the delta.
    #[serde(default)]
    pub query_codes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub response: String,
    pub beam_scores: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GeneratorMeta {
    config: GenerationConfig,
    vocab: Vocab,
    code_ids: BTreeMap<String, u32>,
    train_log: Option<TrainLog>,
}

pub struct Generator {
    config: GenerationConfig,
    vocab: Vocab,
    store: ParamStore,
    model: Seq2Seq,
    log: Option<TrainLog>,
}

impl Generator {
    /// An untrained generator. `vocab` is extended with the role markers
    /// and the code tokens of the active families.
    pub fn new(config: GenerationConfig, mut vocab: Vocab) -> Result<Self> {
        config.validate()?;
        vocab.extend(&[HATE_MARKER, COUNTER_MARKER]);
        let codes: Vec<String> = config.active_codes().iter().map(|c| c.token()).collect();
        vocab.extend(&codes);
        let mut store = ParamStore::new();
        let mut rng = derived(config.train.seed, "generator");
        let model = Seq2Seq::new(
            &mut store,
            &config.model,
            vocab.len(),
            config.max_source_len,
            config.max_target_len,
            &mut rng,
        )?;
        Ok(Generator {
            config,
            vocab,
            store,
            model,
            log: None,
        })
    }

    /// Word vocabulary over every text the examples contain.
    pub fn build_vocab(examples: &[AnnotatedExample]) -> Vocab {
        Vocab::build(
            examples.iter().flat_map(|e| {
                [e.query.as_str(), e.response.as_str()]
                    .into_iter()
                    .chain(e.context.iter().flat_map(|(h, c)| [h.as_str(), c.as_str()]))
            }),
            1,
        )
    }

    pub fn config(&self) -> &GenerationConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn model(&self) -> &Seq2Seq {
        &self.model
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn train_log(&self) -> Option<&TrainLog> {
        self.log.as_ref()
    }

    pub fn is_trained(&self) -> bool {
        self.log.is_some()
    }

    /// Code token ids of the extended vocabulary.
    pub fn code_ids(&self) -> BTreeMap<ControlCode, u32> {
        self.config
            .active_codes()
            .into_iter()
            .filter_map(|c| self.vocab.id(&c.token()).map(|id| (c, id)))
            .collect()
    }

    pub fn layout(&self) -> Layout<'_> {
        Layout {
            vocab: &self.vocab,
            max_source_len: self.config.max_source_len,
            max_target_len: self.config.max_target_len,
            context_turns: self.config.context_turns,
            code_position: self.config.code_position,
        }
    }

    pub fn batch(&self, example: &AnnotatedExample) -> Result<GeneratorBatch> {
        build_training_batch(
            example,
            &example.placement(&self.config.families),
            &self.config.families,
            &self.layout(),
        )
    }

    pub fn batches(&self, examples: &[AnnotatedExample]) -> Result<Vec<GeneratorBatch>> {
        examples.iter().map(|e| self.batch(e)).collect()
    }

    /// Logits `(rows * tgt_len, vocab)` with the matching flat targets and
    /// loss weights.
    fn forward(&self, batches: &[&GeneratorBatch]) -> Result<(Tensor, Tensor, Tensor)> {
        let enc: Vec<Vec<u32>> = batches.iter().map(|b| b.encoder_ids.clone()).collect();
        let dec: Vec<Vec<u32>> = batches.iter().map(|b| b.decoder_input_ids.clone()).collect();
        let (enc_ids, enc_mask) = pad_batch(&enc)?;
        let (dec_ids, _) = pad_batch(&dec)?;
        let (rows, len) = dec_ids.dims2()?;
        let mut targets = Vec::with_capacity(rows * len);
        let mut weights = Vec::with_capacity(rows * len);
        for b in batches {
            for i in 0..len {
                targets.push(b.target_ids.get(i).copied().unwrap_or(0));
                weights.push(b.target_mask.get(i).copied().unwrap_or(0.0));
            }
        }
        let memory = self.model.encode(&enc_ids, &enc_mask)?;
        let logits = self.model.decode(&memory, &dec_ids)?;
        let vocab = logits.dim(2)?;
        let dev = device();
        Ok((
            logits.reshape((rows * len, vocab))?,
            Tensor::from_vec(targets, rows * len, &dev)?,
            Tensor::from_vec(weights, rows * len, &dev)?,
        ))
    }

    fn loss(&self, batches: &[&GeneratorBatch]) -> Result<Tensor> {
        let (logits, targets, weights) = self.forward(batches)?;
        masked_cross_entropy(&logits, &targets, &weights)
    }

    /// Per-example gold-token log-probabilities on the loss positions.
    pub fn token_log_probs(&self, batches: &[GeneratorBatch]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(batches.len());
        for chunk in batches.chunks(32) {
            let refs: Vec<&GeneratorBatch> = chunk.iter().collect();
            let (logits, targets, _) = self.forward(&refs)?;
            let lp = gold_log_probs(&logits, &targets)?.to_vec1::<f32>()?;
            let len = lp.len() / chunk.len();
            for (r, b) in chunk.iter().enumerate() {
                out.push(
                    (0..b.target_ids.len())
                        .filter(|&i| b.target_mask[i] > 0.0)
                        .map(|i| f64::from(lp[r * len + i]))
                        .collect(),
                );
            }
        }
        Ok(out)
    }

    /// Token-weighted mean cross-entropy.
    pub fn mean_loss(&self, batches: &[GeneratorBatch]) -> Result<f64> {
        let lps = self.token_log_probs(batches)?;
        let n: usize = lps.iter().map(Vec::len).sum();
        if n == 0 {
            return Err(Error::Numeric("no target tokens".into()));
        }
        Ok(-lps.iter().flatten().sum::<f64>() / n as f64)
    }

    pub fn train(&mut self, train: &[AnnotatedExample], validation: &[AnnotatedExample]) -> Result<TrainLog> {
        let tb = self.batches(train)?;
        let vb = if validation.is_empty() {
            log::warn!("no validation examples; early stopping watches the training loss");
            tb.clone()
        } else {
            self.batches(validation)?
        };
        let log = fit(
            &self.store,
            &self.config.train,
            tb.len(),
            |idx| self.loss(&idx.iter().map(|&i| &tb[i]).collect::<Vec<_>>()),
            || self.mean_loss(&vb),
        )?;
        self.log = Some(log.clone());
        Ok(log)
    }

    fn check_codes(&self, codes: &FeatureSet) -> Result<()> {
        match codes.iter().find(|c| !self.config.families.contains(&c.family())) {
            Some(c) => Err(Error::Config(format!(
                "code `{c}` belongs to {}, which this generator was not trained with",
                c.family()
            ))),
            None => Ok(()),
        }
    }

    fn banned(&self) -> BTreeSet<u32> {
        [PAD, BOS, CLS, SEP, HATE_MARKER, COUNTER_MARKER]
            .iter()
            .map(|t| self.vocab.special(t))
            .chain(self.code_ids().into_values())
            .collect()
    }

    fn prepare(
        &self,
        context: &[(String, String)],
        query: &str,
        desired: &FeatureSet,
        query_features: &FeatureSet,
    ) -> Result<(Memory, Vec<u32>)> {
        if !self.is_trained() {
            return Err(Error::State("generator is not trained".into()));
        }
        self.check_codes(desired)?;
        let query_features = filter_families(query_features, &self.config.families);
        let delta = feature_delta(&query_features, desired);
        let dec_codes = match self.config.inference_codes {
            InferenceCodes::Delta => delta.decoder_codes,
            InferenceCodes::Raw => desired.clone(),
        };
        let layout = self.layout();
        let src = layout.encoder_ids(&delta.encoder_codes, context, query)?;
        let prefix = layout.decoder_prefix(&dec_codes)?;
        let len = src.len();
        let ids = Tensor::from_vec(src, (1, len), &device())?;
        let mask = Tensor::ones((1, len), DType::F32, &device())?;
        Ok((self.model.encode(&ids, &mask)?, prefix))
    }

    fn render(&self, tokens: &[u32]) -> String {
        let banned = self.banned();
        let words: Vec<&str> = tokens
            .iter()
            .filter(|t| !banned.contains(t))
            .map(|&t| self.vocab.token(t))
            .collect();
        detokenize(&words)
    }

    /// Beam search with the configured width.
    pub fn generate(
        &self,
        context: &[(String, String)],
        query: &str,
        desired: &FeatureSet,
        query_features: &FeatureSet,
    ) -> Result<GenerationResponse> {
        self.generate_with_width(context, query, desired, query_features, self.config.beam_width)
    }

    pub fn generate_with_width(
        &self,
        context: &[(String, String)],
        query: &str,
        desired: &FeatureSet,
        query_features: &FeatureSet,
        width: usize,
    ) -> Result<GenerationResponse> {
        let (memory, prefix) = self.prepare(context, query, desired, query_features)?;
        let max_new = self.config.max_target_len.saturating_sub(prefix.len());
        let beams = beam_search(
            &self.model,
            &memory,
            &prefix,
            self.vocab.special(EOS),
            width,
            max_new,
            &self.banned(),
        )?;
        Ok(GenerationResponse {
            response: beams.first().map(|h| self.render(&h.tokens)).unwrap_or_default(),
            beam_scores: beams.iter().map(Hypothesis::score).collect(),
        })
    }

    /// Greedy decoding, independent of the beam search code path.
    pub fn generate_greedy(
        &self,
        context: &[(String, String)],
        query: &str,
        desired: &FeatureSet,
        query_features: &FeatureSet,
    ) -> Result<String> {
        let (memory, prefix) = self.prepare(context, query, desired, query_features)?;
        let max_new = self.config.max_target_len.saturating_sub(prefix.len());
        let tokens = greedy_decode(&self.model, &memory, &prefix, self.vocab.special(EOS), max_new, &self.banned())?;
        Ok(self.render(&tokens))
    }

    pub fn respond(&self, request: &GenerationRequest) -> Result<GenerationResponse> {
        self.generate(
            &request.context,
            &request.query,
            &parse_feature_set(&request.codes)?,
            &parse_feature_set(&request.query_codes)?,
        )
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        if !self.is_trained() {
            return Err(Error::State("generator is not trained".into()));
        }
        ensure_dir(dir)?;
        self.store.save(&dir.join("weights.safetensors"))?;
        write_json(
            &dir.join("generator.json"),
            &GeneratorMeta {
                config: self.config.clone(),
                vocab: self.vocab.clone(),
                code_ids: self.code_ids().into_iter().map(|(c, id)| (c.name().to_string(), id)).collect(),
                train_log: self.log.clone(),
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: GeneratorMeta = read_json(&dir.join("generator.json"))?;
        let mut g = Generator::new(meta.config, meta.vocab)?;
        for (name, id) in &meta.code_ids {
            let code: ControlCode = name.parse()?;
            if g.vocab.id(&code.token()) != Some(*id) {
                return Err(Error::Config(format!("checkpoint code map disagrees with its vocabulary at `{name}`")));
            }
        }
        g.store.load(&dir.join("weights.safetensors"))?;
        g.log = Some(meta.train_log.unwrap_or_default());
        Ok(g)
    }
}

/// Builds the vocabulary from the training examples and trains.
pub fn train_generator(
    train: &[AnnotatedExample],
    validation: &[AnnotatedExample],
    config: &GenerationConfig,
) -> Result<Generator> {
    if train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let mut g = Generator::new(config.clone(), Generator::build_vocab(train))?;
    g.train(train, validation)?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ControlCode::*;

    fn set(codes: &[ControlCode]) -> FeatureSet {
        codes.iter().copied().collect()
    }

    #[test]
    fn delta_examples() {
        let p = feature_delta(&set(&[Openness, Facts]), &set(&[Facts, RuleOrPrinciple]));
        assert_eq!(p.encoder_codes, set(&[Openness]));
        assert_eq!(p.decoder_codes, set(&[RuleOrPrinciple]));
        assert_eq!(feature_delta(&set(&[]), &set(&[])), CodePlacement::default());
        assert_eq!(feature_delta(&set(&[Facts]), &set(&[Facts])), CodePlacement::default());
        assert!(matches!(parse_feature_set(&["humor"]), Err(Error::Schema(_))));
    }

    fn example() -> AnnotatedExample {
        AnnotatedExample {
            dialogue_id: "d".into(),
            turn_index: 2,
            context: vec![("a b".into(), "c".into()), ("d e f".into(), "g h".into())],
            query: "x y z".into(),
            response: "r s".into(),
            query_features: set(&[Openness, Achievement]),
            response_features: set(&[Agreeableness, GoalMeans, Facts]),
        }
    }

    fn vocab_with_codes() -> Vocab {
        let mut v = Vocab::build(["a b c d e f g h x y z r s"], 1);
        v.extend(&[HATE_MARKER, COUNTER_MARKER]);
        v.extend(&ControlCode::ALL.iter().map(|c| c.token()).collect::<Vec<_>>());
        v
    }

    fn layout(v: &Vocab, max_source_len: usize) -> Layout<'_> {
        Layout {
            vocab: v,
            max_source_len,
            max_target_len: 16,
            context_turns: None,
            code_position: CodePosition::BeforeBos,
        }
    }

    #[test]
    fn batch_layout() {
        let v = vocab_with_codes();
        let fams: BTreeSet<_> = [FeatureFamily::ArgSch, FeatureFamily::Big5].into();
        let ex = example();
        let b = build_training_batch(&ex, &ex.placement(&fams), &fams, &layout(&v, 64)).unwrap();
        let enc: Vec<&str> = b.encoder_ids.iter().map(|&i| v.token(i)).collect();
        assert_eq!(
            enc,
            vec![
                "<big5:openness>", HATE_MARKER, "a", "b", COUNTER_MARKER, "c", HATE_MARKER, "d", "e", "f",
                COUNTER_MARKER, "g", "h", HATE_MARKER, "x", "y", "z"
            ]
        );
        let dec: Vec<&str> = b.decoder_input_ids.iter().map(|&i| v.token(i)).collect();
        assert_eq!(dec, vec!["<big5:agreeableness>", "<argsch:goal_means>", BOS, "r", "s"]);
        let tgt: Vec<&str> = b.target_ids.iter().map(|&i| v.token(i)).collect();
        assert_eq!(tgt, vec!["<argsch:goal_means>", BOS, "r", "s", EOS]);
        assert_eq!(b.target_mask, vec![0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn oldest_context_is_dropped_first() {
        let v = vocab_with_codes();
        let ex = example();
        let none = BTreeSet::new();
        let b = build_training_batch(&ex, &CodePlacement::default(), &none, &layout(&v, 12)).unwrap();
        let enc: Vec<&str> = b.encoder_ids.iter().map(|&i| v.token(i)).collect();
        assert_eq!(enc, vec![HATE_MARKER, "d", "e", "f", COUNTER_MARKER, "g", "h", HATE_MARKER, "x", "y", "z"]);
        let b = build_training_batch(&ex, &CodePlacement::default(), &none, &layout(&v, 3)).unwrap();
        assert_eq!(b.encoder_ids.len(), 3);
        assert_eq!(v.token(b.encoder_ids[0]), HATE_MARKER);
    }

    #[test]
    fn missing_code_token_is_a_config_error() {
        let v = Vocab::build(["x y z r s"], 1);
        let mut v2 = v.clone();
        v2.extend(&[HATE_MARKER, COUNTER_MARKER]);
        let fams: BTreeSet<_> = [FeatureFamily::Big5].into();
        let ex = example();
        assert!(matches!(
            build_training_batch(&ex, &ex.placement(&fams), &fams, &layout(&v2, 64)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn split_keeps_dialogues_whole() {
        let examples: Vec<AnnotatedExample> = (0..20)
            .map(|i| AnnotatedExample {
                dialogue_id: format!("d{}", i / 2),
                turn_index: i % 2,
                ..example()
            })
            .collect();
        let (t, v) = split_examples(&examples, 0.2, 3);
        assert_eq!(t.len() + v.len(), 20);
        assert_eq!(v.len(), 4);
        let tv: BTreeSet<&str> = t.iter().map(|e| e.dialogue_id.as_str()).collect();
        assert!(v.iter().all(|e| !tv.contains(e.dialogue_id.as_str())));
    }

    #[test]
    fn baseline_vocab_has_no_codes() {
        let g = Generator::new(
            GenerationConfig {
                model: Seq2SeqSpec::tiny(),
                max_source_len: 32,
                max_target_len: 16,
                ..Default::default()
            },
            Vocab::build(["x y"], 1),
        )
        .unwrap();
        assert!(g.code_ids().is_empty());
        assert!(ControlCode::ALL.iter().all(|c| g.vocab().id(&c.token()).is_none()));
    }
}
