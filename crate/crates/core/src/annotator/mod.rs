//! Silver-standard annotation of dialogue corpora with the four feature
//! families, and per-side feature distribution reports.

mod baseline;
mod ports;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use baseline::{train_baseline_port, BaselineConfig, BaselinePort, LabeledText};
pub use ports::{ArgTypePort, LexicalPort, StubPort, ValuePort};

use crate::corpus::{DialogueCorpus, Topic};
use crate::error::{Error, Result};
use crate::features::{ControlCode, FeatureFamily, FeatureSet};

/// What a port sees for one side of one turn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PortInput<'a> {
    Text(&'a str),
    /// Counter side of a turn together with the hate text it answers.
    Pair {
        hate: &'a str,
        counter: &'a str,
        topic: Option<Topic>,
    },
}

impl PortInput<'_> {
    /// The text being labeled.
    pub fn target(&self) -> &str {
        match self {
            PortInput::Text(t) => t,
            PortInput::Pair { counter, .. } => counter,
        }
    }
}

/// A classifier for one feature family.
pub trait ClassifierPort: Send + Sync {
    fn name(&self) -> &str;

    fn family(&self) -> FeatureFamily;

    fn predict(&self, input: &PortInput<'_>) -> Result<FeatureSet>;

    fn predict_batch(&self, inputs: &[PortInput<'_>]) -> Result<Vec<FeatureSet>> {
        inputs.iter().map(|i| self.predict(i)).collect()
    }

    /// Checkpoint paths, thresholds and the like, recorded in run metadata.
    fn metadata(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

/// Checks a port's output against its family: codes must belong to the
/// family, and single-label families must yield exactly one code.
pub fn check_port_output(family: FeatureFamily, labels: &FeatureSet) -> Result<()> {
    if let Some(c) = labels.iter().find(|c| c.family() != family) {
        return Err(Error::Schema(format!("code `{c}` is outside family {family}")));
    }
    if family.is_single_label() && labels.len() != 1 {
        return Err(Error::Schema(format!(
            "family {family} is single-label but got {} codes",
            labels.len()
        )));
    }
    Ok(())
}

/// Maps the six raw scheme labels onto the four scheme codes.
pub fn merge_scheme_labels(raw: &str) -> Result<ControlCode> {
    let key: String = raw
        .trim()
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    let key = key.split_whitespace().collect::<Vec<_>>().join(" ");
    let code = match key.as_str() {
        "means for goal" | "goal from means" | "goal for means" => ControlCode::GoalMeans,
        "from consequence" | "from consequences" => ControlCode::FromConsequence,
        "source knowledge" | "from source knowledge" | "source authority" | "from source authority" => {
            ControlCode::FromSourceAuthorityKnowledge
        }
        "rule or principle" | "from rule or principle" => ControlCode::RuleOrPrinciple,
        _ => return Err(Error::Schema(format!("`{raw}` is not a known scheme label"))),
    };
    Ok(code)
}

/// One port per family.
pub struct AnnotationPorts<'a> {
    pub big5: &'a dyn ClassifierPort,
    pub humval: &'a dyn ClassifierPort,
    pub scheme: &'a dyn ClassifierPort,
    pub argtype: &'a dyn ClassifierPort,
}

impl<'a> AnnotationPorts<'a> {
    fn all(&self) -> [&'a dyn ClassifierPort; 4] {
        [self.big5, self.humval, self.scheme, self.argtype]
    }

    fn validate(&self) -> Result<()> {
        for (port, family) in self.all().into_iter().zip(FeatureFamily::ALL) {
            if port.family() != family {
                return Err(Error::Config(format!(
                    "port `{}` labels {} but was given the {family} slot",
                    port.name(),
                    port.family()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedTurn {
    #[serde(rename = "hate")]
    pub hate_text: String,
    #[serde(rename = "counter")]
    pub counter_text: String,
    pub hate_features: FeatureSet,
    pub counter_features: FeatureSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AnnotatedTurn {
    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedDialogue {
    pub dialogue_id: String,
    pub topic: Topic,
    pub turns: Vec<AnnotatedTurn>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortRecord {
    pub family: FeatureFamily,
    pub name: String,
    pub metadata: serde_json::Value,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRun {
    pub ports: Vec<PortRecord>,
    pub turns: usize,
    pub error_turns: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnnotatedCorpus {
    pub dialogues: Vec<AnnotatedDialogue>,
    pub run: AnnotationRun,
}

impl AnnotatedCorpus {
    pub fn turn_count(&self) -> usize {
        self.dialogues.iter().map(|d| d.turns.len()).sum()
    }

    pub fn turns(&self) -> impl Iterator<Item = (&AnnotatedDialogue, &AnnotatedTurn)> {
        self.dialogues.iter().flat_map(|d| d.turns.iter().map(move |t| (d, t)))
    }

    /// One dialogue per line.
    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        crate::artifact::write_jsonl(path, &self.dialogues)
    }

    pub fn save_run(&self, path: &Path) -> Result<()> {
        crate::artifact::write_json(path, &self.run)
    }

    /// Reads annotated dialogues, rejecting argtype codes on the hate side
    /// and codes outside the vocabulary.
    pub fn load_jsonl(path: &Path) -> Result<Self> {
        let dialogues: Vec<AnnotatedDialogue> = crate::artifact::read_jsonl(path)?;
        for d in &dialogues {
            for (i, t) in d.turns.iter().enumerate() {
                if t.hate_features.iter().any(|c| c.family() == FeatureFamily::ArgType) {
                    return Err(Error::Schema(format!(
                        "dialogue {} turn {i}: argType code on the hate side",
                        d.dialogue_id
                    )));
                }
            }
        }
        let turns = dialogues.iter().map(|d| d.turns.len()).sum();
        let error_turns = dialogues.iter().flat_map(|d| &d.turns).filter(|t| t.is_error()).count();
        Ok(AnnotatedCorpus {
            dialogues,
            run: AnnotationRun {
                ports: Vec::new(),
                turns,
                error_turns,
            },
        })
    }
}

/// Runs `port` over `inputs` as one batch; if the batch fails, falls back to
/// one call per input so that only the failing inputs are flagged.
fn run_port(port: &dyn ClassifierPort, inputs: &[PortInput<'_>]) -> Vec<std::result::Result<FeatureSet, String>> {
    let checked = |r: Result<FeatureSet>| {
        r.and_then(|set| check_port_output(port.family(), &set).map(|_| set))
            .map_err(|e| format!("{}: {e}", port.name()))
    };
    match port.predict_batch(inputs) {
        Ok(sets) if sets.len() == inputs.len() => sets.into_iter().map(|s| checked(Ok(s))).collect(),
        _ => inputs.iter().map(|i| checked(port.predict(i))).collect(),
    }
}

/// Annotates every turn of every dialogue. Hate-side features are computed
/// from the hate text alone; counter-side features from the counter text,
/// with argument types looking at the pair. A port failure flags the turn,
/// empties its feature sets, and the run continues.
pub fn annotate_corpus(corpus: &DialogueCorpus, ports: &AnnotationPorts<'_>) -> Result<AnnotatedCorpus> {
    ports.validate()?;
    let mut dialogues = Vec::with_capacity(corpus.dialogues.len());
    let mut error_turns = 0;
    for dialogue in &corpus.dialogues {
        let hate_in: Vec<PortInput<'_>> = dialogue.turns.iter().map(|t| PortInput::Text(&t.hate_text)).collect();
        let counter_in: Vec<PortInput<'_>> = dialogue.turns.iter().map(|t| PortInput::Text(&t.counter_text)).collect();
        let pair_in: Vec<PortInput<'_>> = dialogue
            .turns
            .iter()
            .map(|t| PortInput::Pair {
                hate: &t.hate_text,
                counter: &t.counter_text,
                topic: Some(t.topic),
            })
            .collect();
        let mut hate_out = Vec::new();
        let mut counter_out = Vec::new();
        for port in [ports.big5, ports.humval, ports.scheme] {
            hate_out.push(run_port(port, &hate_in));
            counter_out.push(run_port(port, &counter_in));
        }
        counter_out.push(run_port(ports.argtype, &pair_in));

        let mut turns = Vec::with_capacity(dialogue.turns.len());
        for (i, t) in dialogue.turns.iter().enumerate() {
            let mut hate_features = FeatureSet::new();
            let mut counter_features = FeatureSet::new();
            let mut errors = Vec::new();
            for (out, target) in [(&hate_out, &mut hate_features), (&counter_out, &mut counter_features)] {
                for per_port in out.iter() {
                    match &per_port[i] {
                        Ok(set) => target.extend(set.iter().copied()),
                        Err(e) => errors.push(e.clone()),
                    }
                }
            }
            let error = if errors.is_empty() {
                None
            } else {
                log::warn!("dialogue {} turn {}: {}", dialogue.dialogue_id, t.turn_index, errors.join("; "));
                hate_features.clear();
                counter_features.clear();
                error_turns += 1;
                Some(errors.join("; "))
            };
            turns.push(AnnotatedTurn {
                hate_text: t.hate_text.clone(),
                counter_text: t.counter_text.clone(),
                hate_features,
                counter_features,
                error,
            });
        }
        dialogues.push(AnnotatedDialogue {
            dialogue_id: dialogue.dialogue_id.clone(),
            topic: dialogue.topic,
            turns,
        });
    }
    let run = AnnotationRun {
        ports: ports
            .all()
            .into_iter()
            .map(|p| PortRecord {
                family: p.family(),
                name: p.name().to_string(),
                metadata: p.metadata(),
            })
            .collect(),
        turns: corpus.turn_count(),
        error_turns,
    };
    Ok(AnnotatedCorpus { dialogues, run })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Hate,
    Counter,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Hate => "hate",
            Side::Counter => "counter",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub family: FeatureFamily,
    pub code: ControlCode,
    pub side: Side,
    pub count: usize,
    pub proportion: f64,
}

/// Per-code counts on each side. Proportions are shares within the code's
/// family and side, so they sum to 1 wherever the family has any label.
/// Error turns are skipped.
pub fn feature_distribution_report(annotated: &AnnotatedCorpus) -> Result<Vec<DistributionRow>> {
    if annotated.turn_count() == 0 {
        return Err(Error::EmptyCorpus("annotated corpus has no turns".into()));
    }
    let mut counts: BTreeMap<(Side, ControlCode), usize> = BTreeMap::new();
    for (_, t) in annotated.turns().filter(|(_, t)| !t.is_error()) {
        for (side, set) in [(Side::Hate, &t.hate_features), (Side::Counter, &t.counter_features)] {
            for &c in set {
                *counts.entry((side, c)).or_default() += 1;
            }
        }
    }
    let mut rows = Vec::with_capacity(ControlCode::ALL.len() * 2);
    for family in FeatureFamily::ALL {
        for side in [Side::Hate, Side::Counter] {
            let total: usize = family.codes().map(|c| counts.get(&(side, c)).copied().unwrap_or(0)).sum();
            for code in family.codes() {
                let count = counts.get(&(side, code)).copied().unwrap_or(0);
                rows.push(DistributionRow {
                    family,
                    code,
                    side,
                    count,
                    proportion: if total == 0 { 0.0 } else { count as f64 / total as f64 },
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_distribution_csv(rows: &[DistributionRow], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        crate::artifact::ensure_dir(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Dialogue;

    fn corpus() -> DialogueCorpus {
        DialogueCorpus::new(vec![Dialogue::from_pairs(
            "d1",
            Topic::Women,
            [("women are weak", "that is simply false"), ("stay home", "why should they?")],
        )
        .unwrap()])
    }

    #[test]
    fn scheme_merging() {
        assert_eq!(merge_scheme_labels("From Source Authority").unwrap(), ControlCode::FromSourceAuthorityKnowledge);
        assert_eq!(merge_scheme_labels("Source Knowledge").unwrap(), ControlCode::FromSourceAuthorityKnowledge);
        assert_eq!(merge_scheme_labels("Means for Goal").unwrap(), ControlCode::GoalMeans);
        assert_eq!(merge_scheme_labels("Goal from Means").unwrap(), ControlCode::GoalMeans);
        assert_eq!(merge_scheme_labels("Rule or Principle").unwrap(), ControlCode::RuleOrPrinciple);
        assert!(matches!(merge_scheme_labels("From Analogy"), Err(Error::Schema(_))));
    }

    #[test]
    fn stub_labels_pass_through() {
        let big5 = StubPort::new(FeatureFamily::Big5, [ControlCode::Openness]).unwrap();
        let humval = StubPort::new(FeatureFamily::HumVal, [ControlCode::Achievement]).unwrap();
        let scheme = StubPort::new(FeatureFamily::ArgSch, [ControlCode::GoalMeans]).unwrap();
        let argtype = StubPort::new(FeatureFamily::ArgType, [ControlCode::Facts]).unwrap();
        let ports = AnnotationPorts {
            big5: &big5,
            humval: &humval,
            scheme: &scheme,
            argtype: &argtype,
        };
        let out = annotate_corpus(&corpus(), &ports).unwrap();
        assert_eq!(out.turn_count(), 2);
        for (_, t) in out.turns() {
            let hate: Vec<_> = t.hate_features.iter().copied().collect();
            assert_eq!(hate, vec![ControlCode::Openness, ControlCode::Achievement, ControlCode::GoalMeans]);
            assert!(t.counter_features.contains(&ControlCode::Facts));
            assert!(!t.hate_features.contains(&ControlCode::Facts));
        }
        assert_eq!(out.run.ports.len(), 4);
    }

    #[test]
    fn wrong_slot_is_rejected() {
        let big5 = StubPort::new(FeatureFamily::Big5, [ControlCode::Openness]).unwrap();
        let ports = AnnotationPorts {
            big5: &big5,
            humval: &big5,
            scheme: &big5,
            argtype: &big5,
        };
        assert!(matches!(annotate_corpus(&corpus(), &ports), Err(Error::Config(_))));
    }

    struct Failing;

    impl ClassifierPort for Failing {
        fn name(&self) -> &str {
            "failing"
        }

        fn family(&self) -> FeatureFamily {
            FeatureFamily::Big5
        }

        fn predict(&self, input: &PortInput<'_>) -> Result<FeatureSet> {
            if input.target().contains('?') {
                Err(Error::State("boom".into()))
            } else {
                Ok([ControlCode::Neuroticism].into())
            }
        }
    }

    #[test]
    fn failing_turn_is_flagged_not_dropped() {
        let humval = StubPort::new(FeatureFamily::HumVal, []).unwrap();
        let scheme = StubPort::new(FeatureFamily::ArgSch, [ControlCode::RuleOrPrinciple]).unwrap();
        let argtype = StubPort::new(FeatureFamily::ArgType, []).unwrap();
        let ports = AnnotationPorts {
            big5: &Failing,
            humval: &humval,
            scheme: &scheme,
            argtype: &argtype,
        };
        let out = annotate_corpus(&corpus(), &ports).unwrap();
        let turns = &out.dialogues[0].turns;
        assert!(turns[0].error.is_none());
        assert!(turns[1].error.as_deref().unwrap().contains("boom"));
        assert!(turns[1].hate_features.is_empty() && turns[1].counter_features.is_empty());
        assert_eq!(out.run.error_turns, 1);
    }

    #[test]
    fn report_rows_and_proportions() {
        let big5 = StubPort::new(FeatureFamily::Big5, [ControlCode::Openness]).unwrap();
        let humval = StubPort::new(FeatureFamily::HumVal, []).unwrap();
        let scheme = StubPort::new(FeatureFamily::ArgSch, [ControlCode::GoalMeans]).unwrap();
        let argtype = StubPort::new(FeatureFamily::ArgType, [ControlCode::Facts]).unwrap();
        let ports = AnnotationPorts {
            big5: &big5,
            humval: &humval,
            scheme: &scheme,
            argtype: &argtype,
        };
        let rows = feature_distribution_report(&annotate_corpus(&corpus(), &ports).unwrap()).unwrap();
        assert_eq!(rows.len(), 40);
        let facts = rows
            .iter()
            .find(|r| r.code == ControlCode::Facts && r.side == Side::Counter)
            .unwrap();
        assert_eq!((facts.count, facts.proportion), (2, 1.0));
        assert!(matches!(
            feature_distribution_report(&AnnotatedCorpus::default()),
            Err(Error::EmptyCorpus(_))
        ));
    }
}
