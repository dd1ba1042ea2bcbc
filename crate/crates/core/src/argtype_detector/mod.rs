//! Counter-argument type detection over hate/counter pairs, with topic
//! keyword masking and a four-member majority ensemble.

mod keywords;
mod model;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use keywords::{
    curate_topic_keywords, expand_keywords, is_word_char, keyword_tokens, mask_text, mask_text_all,
    topic_token_counts, BundledTagger, KeywordReading, KeywordRule, Lexicon, Pluralizer, Pos,
    PosTagger, SuffixPluralizer, TableLexicon, TopicKeywordSet,
};
pub use model::{train_argtype_model, ArgTypeConfig, ArgTypeModel, ArgTypeVariant, PairEncoding};

use crate::corpus::Topic;
use crate::error::{Error, Result};
use crate::features::ControlCode;
use crate::rng::seeded;
use crate::text::normalize_whitespace;

pub const ARG_TYPE_COUNT: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArgType {
    Denouncing,
    Facts,
    Humor,
    Hypocrisy,
    Positive,
    Question,
}

impl ArgType {
    pub const ALL: [ArgType; ARG_TYPE_COUNT] = [
        ArgType::Denouncing,
        ArgType::Facts,
        ArgType::Humor,
        ArgType::Hypocrisy,
        ArgType::Positive,
        ArgType::Question,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ArgType::Denouncing => "denouncing",
            ArgType::Facts => "facts",
            ArgType::Humor => "humor",
            ArgType::Hypocrisy => "hypocrisy",
            ArgType::Positive => "positive",
            ArgType::Question => "question",
        }
    }

    /// Input token prefixed to every encoded pair.
    pub fn token(self) -> String {
        format!("<type:{}>", self.name())
    }

    /// The control code used in annotation; humor has none.
    pub fn control_code(self) -> Option<ControlCode> {
        match self {
            ArgType::Denouncing => Some(ControlCode::Denouncing),
            ArgType::Facts => Some(ControlCode::Facts),
            ArgType::Humor => None,
            ArgType::Hypocrisy => Some(ControlCode::Hypocrisy),
            ArgType::Positive => Some(ControlCode::Positive),
            ArgType::Question => Some(ControlCode::Question),
        }
    }
}

impl fmt::Display for ArgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArgType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_lowercase();
        let t = match key.as_str() {
            "denouncing" | "denounce" => ArgType::Denouncing,
            "facts" | "fact" | "presentation of facts" => ArgType::Facts,
            "humor" | "humour" => ArgType::Humor,
            "hypocrisy" | "pointing out hypocrisy" => ArgType::Hypocrisy,
            "positive" | "positive tone" => ArgType::Positive,
            "question" | "questions" => ArgType::Question,
            _ => return Err(Error::Schema(format!("`{s}` is not one of the six argument types"))),
        };
        Ok(t)
    }
}

/// Probabilities and decisions for the six types.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArgTypeLabel {
    pub probs: [f64; ARG_TYPE_COUNT],
    pub decisions: [bool; ARG_TYPE_COUNT],
}

impl ArgTypeLabel {
    pub fn from_probs(probs: [f64; ARG_TYPE_COUNT], threshold: f64) -> Self {
        ArgTypeLabel {
            probs,
            decisions: probs.map(|p| p >= threshold),
        }
    }

    pub fn positive(&self) -> Vec<ArgType> {
        ArgType::ALL.into_iter().filter(|t| self.decisions[t.index()]).collect()
    }

    /// Control codes of the positive types, humor excluded.
    pub fn control_codes(&self) -> BTreeSet<ControlCode> {
        self.positive().into_iter().filter_map(ArgType::control_code).collect()
    }
}

/// Ensemble rule for four members: positive with at least three votes; a
/// two-two tie is positive iff the mean probability exceeds 0.5.
pub fn argtype_vote(votes: &[bool], mean_prob: f64) -> bool {
    let yes = votes.iter().filter(|&&v| v).count();
    let no = votes.len() - yes;
    if yes >= 3 {
        true
    } else if yes == 2 && no == 2 {
        mean_prob > 0.5
    } else {
        false
    }
}

pub fn combine_argtype_votes(members: &[ArgTypeLabel]) -> Result<ArgTypeLabel> {
    if members.len() != 4 {
        return Err(Error::State(format!("argtype ensemble needs 4 members, got {}", members.len())));
    }
    let mut out = ArgTypeLabel {
        probs: [0.0; ARG_TYPE_COUNT],
        decisions: [false; ARG_TYPE_COUNT],
    };
    for k in 0..ARG_TYPE_COUNT {
        let votes: Vec<bool> = members.iter().map(|m| m.decisions[k]).collect();
        let mean = members.iter().map(|m| m.probs[k]).sum::<f64>() / 4.0;
        out.probs[k] = mean;
        out.decisions[k] = argtype_vote(&votes, mean);
    }
    Ok(out)
}

/// Labeled pair record: JSON Lines `{"hate", "counter", "labels"}` with an
/// optional `"topic"` used for masking.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub hate: String,
    pub counter: String,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<Topic>,
}

impl LabeledPair {
    pub fn label_vector(&self) -> Result<[bool; ARG_TYPE_COUNT]> {
        let mut v = [false; ARG_TYPE_COUNT];
        for l in &self.labels {
            v[l.parse::<ArgType>()?.index()] = true;
        }
        Ok(v)
    }
}

pub fn load_labeled_pairs(path: &Path) -> Result<Vec<LabeledPair>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)?;
        for field in ["hate", "counter", "labels"] {
            if value.get(field).is_none() {
                return Err(Error::missing(field, format!("line {}", i + 1)));
            }
        }
        let pair: LabeledPair = serde_json::from_value(value)?;
        pair.label_vector()?;
        out.push(pair);
    }
    Ok(out)
}

/// Train/test split in which no counter-argument text of the test part
/// occurs in the training part. Whole counter-text groups move to the
/// test side until it holds at least `test_size` pairs.
pub fn split_unseen_counters(pairs: &[LabeledPair], test_size: usize, seed: u64) -> (Vec<LabeledPair>, Vec<LabeledPair>) {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        groups.entry(normalize_whitespace(&p.counter).to_lowercase()).or_default().push(i);
    }
    let mut keys: Vec<&String> = groups.keys().collect();
    keys.shuffle(&mut seeded(seed));
    let mut test_idx = BTreeSet::new();
    for k in keys {
        if test_idx.len() >= test_size {
            break;
        }
        test_idx.extend(groups[k].iter().copied());
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        if test_idx.contains(&i) {
            test.push(p.clone());
        } else {
            train.push(p.clone());
        }
    }
    (train, test)
}

/// Anything that labels `(hate, counter, topic)` triples with the six types.
pub trait ArgTypePredictor: Send + Sync {
    fn predict_pairs(&self, pairs: &[(String, String, Option<Topic>)]) -> Result<Vec<ArgTypeLabel>>;

    fn threshold(&self) -> f64;
}

impl ArgTypePredictor for ArgTypeModel {
    fn predict_pairs(&self, pairs: &[(String, String, Option<Topic>)]) -> Result<Vec<ArgTypeLabel>> {
        self.predict(pairs)
    }

    fn threshold(&self) -> f64 {
        self.config().threshold
    }
}

impl ArgTypePredictor for ArgTypeEnsemble {
    fn predict_pairs(&self, pairs: &[(String, String, Option<Topic>)]) -> Result<Vec<ArgTypeLabel>> {
        self.predict(pairs)
    }

    fn threshold(&self) -> f64 {
        0.5
    }
}

/// Four trained variants combined by [`combine_argtype_votes`].
pub struct ArgTypeEnsemble {
    pub members: Vec<ArgTypeModel>,
}

impl ArgTypeEnsemble {
    pub fn new(members: Vec<ArgTypeModel>) -> Result<Self> {
        if members.len() != 4 {
            return Err(Error::State(format!("argtype ensemble needs 4 variants, got {}", members.len())));
        }
        if let Some(m) = members.iter().find(|m| !m.is_trained()) {
            return Err(Error::State(format!("variant `{}` is not trained", m.variant().name)));
        }
        Ok(ArgTypeEnsemble { members })
    }

    pub fn predict(&self, pairs: &[(String, String, Option<Topic>)]) -> Result<Vec<ArgTypeLabel>> {
        let outputs = self
            .members
            .iter()
            .map(|m| m.predict(pairs))
            .collect::<Result<Vec<_>>>()?;
        (0..pairs.len())
            .map(|i| combine_argtype_votes(&outputs.iter().map(|o| o[i]).collect::<Vec<_>>()))
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        for m in &self.members {
            m.save(&dir.join(&m.variant().name))?;
        }
        crate::artifact::write_json(
            &dir.join("ensemble.json"),
            &self.members.iter().map(|m| m.variant().name.clone()).collect::<Vec<_>>(),
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let names: Vec<String> = crate::artifact::read_json(&dir.join("ensemble.json"))?;
        let members = names
            .iter()
            .map(|n| ArgTypeModel::load(&dir.join(n)))
            .collect::<Result<Vec<_>>>()?;
        ArgTypeEnsemble::new(members)
    }
}
