use std::collections::BTreeMap;
use std::path::Path;

use serde_json::json;

use super::{check_port_output, ClassifierPort, PortInput};
use crate::argtype_detector::ArgTypePredictor;
use crate::error::{Error, Result};
use crate::features::{ControlCode, FeatureFamily, FeatureSet};
use crate::text::tokenize;
use crate::value_detector::{ensemble_predict, ValuePredictor};

/// Returns the same labels for every input.
pub struct StubPort {
    name: String,
    family: FeatureFamily,
    labels: FeatureSet,
}

impl StubPort {
    pub fn new(family: FeatureFamily, labels: impl IntoIterator<Item = ControlCode>) -> Result<Self> {
        let labels: FeatureSet = labels.into_iter().collect();
        check_port_output(family, &labels)?;
        Ok(StubPort {
            name: format!("stub-{family}"),
            family,
            labels,
        })
    }
}

impl ClassifierPort for StubPort {
    fn name(&self) -> &str {
        &self.name
    }

    fn family(&self) -> FeatureFamily {
        self.family
    }

    fn predict(&self, _input: &PortInput<'_>) -> Result<FeatureSet> {
        Ok(self.labels.clone())
    }

    fn metadata(&self) -> serde_json::Value {
        json!({ "kind": "stub", "labels": self.labels })
    }
}

/// Cue-word matcher. Multi-label families return every code with a cue
/// hit; single-label families return the code with most hits (ties by
/// canonical order) or the fallback code when nothing matches.
pub struct LexicalPort {
    name: String,
    family: FeatureFamily,
    cues: BTreeMap<ControlCode, Vec<String>>,
    fallback: Option<ControlCode>,
}

impl LexicalPort {
    pub fn new(
        family: FeatureFamily,
        cues: BTreeMap<ControlCode, Vec<String>>,
        fallback: Option<ControlCode>,
    ) -> Result<Self> {
        let codes: FeatureSet = cues.keys().copied().chain(fallback).collect();
        if let Some(c) = codes.iter().find(|c| c.family() != family) {
            return Err(Error::Config(format!("cue code `{c}` is outside family {family}")));
        }
        if family.is_single_label() && fallback.is_none() {
            return Err(Error::Config(format!("single-label family {family} needs a fallback code")));
        }
        let cues = cues
            .into_iter()
            .map(|(c, words)| (c, words.iter().map(|w| w.to_lowercase()).collect()))
            .collect();
        Ok(LexicalPort {
            name: format!("lexical-{family}"),
            family,
            cues,
            fallback,
        })
    }

    /// The bundled cue table for `family`.
    pub fn bundled(family: FeatureFamily) -> Result<Self> {
        let all: BTreeMap<String, BTreeMap<String, Vec<String>>> =
            serde_json::from_str(include_str!("../../data/cues.json"))?;
        let table = all
            .get(family.as_str())
            .ok_or_else(|| Error::Config(format!("no bundled cues for {family}")))?;
        Self::from_table(family, table)
    }

    /// Loads `{"family": {"code": [words]}}`, plus an optional `"fallback"`
    /// entry per family whose single word names the fallback code.
    pub fn load(family: FeatureFamily, path: &Path) -> Result<Self> {
        let all: BTreeMap<String, BTreeMap<String, Vec<String>>> = crate::artifact::read_json(path)?;
        let table = all
            .get(family.as_str())
            .ok_or_else(|| Error::Config(format!("{} has no cues for {family}", path.display())))?;
        Self::from_table(family, table)
    }

    fn from_table(family: FeatureFamily, table: &BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut cues = BTreeMap::new();
        let mut fallback = None;
        for (key, words) in table {
            if key == "fallback" {
                let name = words.first().ok_or_else(|| Error::Config("empty fallback entry".into()))?;
                fallback = Some(name.parse()?);
            } else {
                cues.insert(key.parse()?, words.clone());
            }
        }
        Self::new(family, cues, fallback)
    }
}

impl ClassifierPort for LexicalPort {
    fn name(&self) -> &str {
        &self.name
    }

    fn family(&self) -> FeatureFamily {
        self.family
    }

    fn predict(&self, input: &PortInput<'_>) -> Result<FeatureSet> {
        let tokens = tokenize(input.target());
        let hits: Vec<(ControlCode, usize)> = self
            .cues
            .iter()
            .map(|(&c, words)| (c, tokens.iter().filter(|t| words.contains(t)).count()))
            .filter(|&(_, n)| n > 0)
            .collect();
        if self.family.is_single_label() {
            let best = hits
                .iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|&(c, _)| c)
                .or(self.fallback);
            Ok(best.into_iter().collect())
        } else {
            Ok(hits.into_iter().map(|(c, _)| c).collect())
        }
    }

    fn metadata(&self) -> serde_json::Value {
        json!({ "kind": "lexical", "fallback": self.fallback })
    }
}

/// Human-value port over one value model or the three-model ensemble.
/// Only the six top categories become codes.
pub struct ValuePort {
    members: Vec<Box<dyn ValuePredictor>>,
    metadata: serde_json::Value,
}

impl ValuePort {
    pub fn new(members: Vec<Box<dyn ValuePredictor>>, metadata: serde_json::Value) -> Result<Self> {
        if members.len() != 1 && members.len() != 3 {
            return Err(Error::Config(format!(
                "value port takes 1 model or a 3-model ensemble, got {}",
                members.len()
            )));
        }
        Ok(ValuePort { members, metadata })
    }

    fn predict_texts(&self, texts: &[String]) -> Result<Vec<FeatureSet>> {
        let preds = match self.members.as_slice() {
            [one] => one.predict(texts)?,
            [a, b, c] => ensemble_predict(texts, [a.as_ref(), b.as_ref(), c.as_ref()])?,
            _ => unreachable!("member count checked in new"),
        };
        Ok(preds
            .iter()
            .map(|p| {
                p.top_categories()
                    .positive_labels()
                    .into_iter()
                    .filter_map(ControlCode::from_value_label)
                    .collect()
            })
            .collect())
    }
}

impl ClassifierPort for ValuePort {
    fn name(&self) -> &str {
        if self.members.len() == 3 {
            "value-ensemble"
        } else {
            self.members[0].model_type()
        }
    }

    fn family(&self) -> FeatureFamily {
        FeatureFamily::HumVal
    }

    fn predict(&self, input: &PortInput<'_>) -> Result<FeatureSet> {
        Ok(self.predict_texts(&[input.target().to_string()])?.remove(0))
    }

    fn predict_batch(&self, inputs: &[PortInput<'_>]) -> Result<Vec<FeatureSet>> {
        let texts: Vec<String> = inputs.iter().map(|i| i.target().to_string()).collect();
        self.predict_texts(&texts)
    }

    fn metadata(&self) -> serde_json::Value {
        json!({
            "kind": "value",
            "members": self.members.iter().map(|m| m.model_type()).collect::<Vec<_>>(),
            "details": self.metadata,
        })
    }
}

/// Argument-type port. Labels the counter side of a pair; humor is
/// dropped because it has no control code.
pub struct ArgTypePort {
    predictor: Box<dyn ArgTypePredictor>,
    metadata: serde_json::Value,
}

impl ArgTypePort {
    pub fn new(predictor: Box<dyn ArgTypePredictor>, metadata: serde_json::Value) -> Self {
        ArgTypePort { predictor, metadata }
    }
}

impl ClassifierPort for ArgTypePort {
    fn name(&self) -> &str {
        "argtype"
    }

    fn family(&self) -> FeatureFamily {
        FeatureFamily::ArgType
    }

    fn predict(&self, input: &PortInput<'_>) -> Result<FeatureSet> {
        Ok(self.predict_batch(std::slice::from_ref(input))?.remove(0))
    }

    fn predict_batch(&self, inputs: &[PortInput<'_>]) -> Result<Vec<FeatureSet>> {
        let pairs = inputs
            .iter()
            .map(|i| match *i {
                PortInput::Pair { hate, counter, topic } => Ok((hate.to_string(), counter.to_string(), topic)),
                PortInput::Text(_) => Err(Error::Config("argtype port needs (hate, counter) pairs".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self
            .predictor
            .predict_pairs(&pairs)?
            .iter()
            .map(|l| l.control_codes())
            .collect())
    }

    fn metadata(&self) -> serde_json::Value {
        json!({
            "kind": "argtype",
            "threshold": self.predictor.threshold(),
            "details": self.metadata,
        })
    }
}
