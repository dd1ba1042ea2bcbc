//! Hate-speech dialogue corpora: loading, normalization and per-turn
//! generation examples.
//!
//! The canonical on-disk form is JSON Lines with one dialogue per line:
//!
//! ```text
//! {"dialogue_id": "d1", "topic": "MIGRANTS", "turns": [{"hate": "...", "counter": "..."}]}
//! ```
//!
//! Two adapters read upstream release formats: the multi-turn CSV
//! (`dialogue_id, turn_id, text, type, target`) and single-turn hate/counter
//! pair CSVs, whose rows become one-turn dialogues.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::normalize_whitespace;

/// Target group of a hateful message.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Topic {
    #[serde(rename = "LGBT+")]
    Lgbt,
    #[serde(rename = "MIGRANTS")]
    Migrants,
    #[serde(rename = "MUSLIMS")]
    Muslims,
    #[serde(rename = "JEWS")]
    Jews,
    #[serde(rename = "POC")]
    PeopleOfColor,
    #[serde(rename = "WOMEN")]
    Women,
}

impl Topic {
    pub const ALL: [Topic; 6] = [
        Topic::Lgbt,
        Topic::Migrants,
        Topic::Muslims,
        Topic::Jews,
        Topic::PeopleOfColor,
        Topic::Women,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Topic::Lgbt => "LGBT+",
            Topic::Migrants => "MIGRANTS",
            Topic::Muslims => "MUSLIMS",
            Topic::Jews => "JEWS",
            Topic::PeopleOfColor => "POC",
            Topic::Women => "WOMEN",
        }
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Topic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .to_lowercase()
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect();
        let topic = match key.as_str() {
            "lgbt" | "lgbtq" | "lgbtqi" | "lgbtqia" => Topic::Lgbt,
            "migrants" | "migrant" | "immigrants" => Topic::Migrants,
            "muslims" | "muslim" | "islamophobia" | "islam" => Topic::Muslims,
            "jews" | "jew" | "jewish" | "antisemitism" => Topic::Jews,
            "poc" | "peopleofcolor" | "peopleofcolour" => Topic::PeopleOfColor,
            "women" | "woman" => Topic::Women,
            _ => return Err(Error::Schema(format!("unknown topic `{s}`"))),
        };
        Ok(topic)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub turn_index: usize,
    pub hate_text: String,
    pub counter_text: String,
    pub topic: Topic,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub dialogue_id: String,
    pub topic: Topic,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    /// Builds a dialogue from raw (hate, counter) pairs, normalizing text and
    /// assigning contiguous turn indices.
    pub fn from_pairs<I, S>(dialogue_id: impl Into<String>, topic: Topic, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        let dialogue_id = dialogue_id.into();
        let mut turns = Vec::new();
        for (turn_index, (hate, counter)) in pairs.into_iter().enumerate() {
            let hate_text = normalize_whitespace(hate.as_ref());
            let counter_text = normalize_whitespace(counter.as_ref());
            if hate_text.is_empty() {
                return Err(Error::Schema(format!(
                    "dialogue {dialogue_id} turn {turn_index}: empty hate text"
                )));
            }
            if counter_text.is_empty() {
                return Err(Error::Schema(format!(
                    "dialogue {dialogue_id} turn {turn_index}: empty counter text"
                )));
            }
            turns.push(Turn {
                turn_index,
                hate_text,
                counter_text,
                topic,
            });
        }
        if turns.is_empty() {
            return Err(Error::Schema(format!("dialogue {dialogue_id} has no turns")));
        }
        Ok(Dialogue {
            dialogue_id,
            topic,
            turns,
        })
    }
}

/// Upstream file formats understood by [`load_dialogue_corpus`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    /// Canonical JSON Lines, one dialogue per line.
    Canonical,
    /// Multi-turn CSV with `dialogue_id, turn_id, text, type, target`.
    Dialoconan,
    /// Single-turn hate/counter pairs CSV.
    ConanPairs,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().replace('-', "_").as_str() {
            "canonical" | "jsonl" => Ok(CorpusFormat::Canonical),
            "dialoconan" => Ok(CorpusFormat::Dialoconan),
            "conan_pairs" | "conan" => Ok(CorpusFormat::ConanPairs),
            other => Err(Error::Config(format!("unknown corpus format `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DialogueCorpus {
    pub dialogues: Vec<Dialogue>,
}

impl DialogueCorpus {
    pub fn new(dialogues: Vec<Dialogue>) -> Self {
        DialogueCorpus { dialogues }
    }

    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    pub fn turn_count(&self) -> usize {
        self.dialogues.iter().map(|d| d.turns.len()).sum()
    }

    pub fn turns(&self) -> impl Iterator<Item = (&Dialogue, &Turn)> {
        self.dialogues
            .iter()
            .flat_map(|d| d.turns.iter().map(move |t| (d, t)))
    }

    /// Concatenates corpora, e.g. multi-turn dialogues plus one-turn pairs.
    pub fn extend(&mut self, other: DialogueCorpus) {
        self.dialogues.extend(other.dialogues);
    }

    /// Writes the canonical JSON Lines form.
    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for dialogue in &self.dialogues {
            out.push_str(&serde_json::to_string(&CanonicalDialogue::from(dialogue))?);
            out.push('\n');
        }
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct CanonicalTurn {
    hate: String,
    counter: String,
}

#[derive(Serialize, Deserialize)]
struct CanonicalDialogue {
    dialogue_id: String,
    topic: String,
    turns: Vec<CanonicalTurn>,
}

impl From<&Dialogue> for CanonicalDialogue {
    fn from(d: &Dialogue) -> Self {
        CanonicalDialogue {
            dialogue_id: d.dialogue_id.clone(),
            topic: d.topic.to_string(),
            turns: d
                .turns
                .iter()
                .map(|t| CanonicalTurn {
                    hate: t.hate_text.clone(),
                    counter: t.counter_text.clone(),
                })
                .collect(),
        }
    }
}

/// Loads a corpus in one of the supported formats.
pub fn load_dialogue_corpus(path: &Path, format: CorpusFormat) -> Result<DialogueCorpus> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if raw.trim().is_empty() {
        return Err(Error::EmptyCorpus(path.display().to_string()));
    }
    let corpus = match format {
        CorpusFormat::Canonical => parse_canonical(&raw)?,
        CorpusFormat::Dialoconan => parse_dialoconan_csv(&raw)?,
        CorpusFormat::ConanPairs => parse_conan_pairs_csv(&raw)?,
    };
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus(path.display().to_string()));
    }
    Ok(corpus)
}

fn parse_canonical(raw: &str) -> Result<DialogueCorpus> {
    let mut dialogues = Vec::new();
    for (line_no, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)?;
        let context = format!("line {}", line_no + 1);
        let field = |name: &str| -> Result<&serde_json::Value> {
            value.get(name).ok_or_else(|| Error::missing(name, &context))
        };
        let dialogue_id = json_str(field("dialogue_id")?, "dialogue_id", &context)?;
        let topic: Topic = json_str(field("topic")?, "topic", &context)?.parse()?;
        let turns = field("turns")?
            .as_array()
            .ok_or_else(|| Error::Schema(format!("{context}: `turns` must be an array")))?;
        let mut pairs = Vec::with_capacity(turns.len());
        for turn in turns {
            let hate = turn
                .get("hate")
                .ok_or_else(|| Error::missing("hate", &context))?;
            let counter = turn
                .get("counter")
                .ok_or_else(|| Error::missing("counter", &context))?;
            pairs.push((
                json_str(hate, "hate", &context)?,
                json_str(counter, "counter", &context)?,
            ));
        }
        dialogues.push(Dialogue::from_pairs(dialogue_id, topic, pairs)?);
    }
    Ok(DialogueCorpus::new(dialogues))
}

fn json_str(value: &serde_json::Value, field: &str, context: &str) -> Result<String> {
    value
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| Error::Schema(format!("{context}: `{field}` must be a string")))
}

/// Finds a column by case-insensitive name among aliases.
fn column(headers: &csv::StringRecord, aliases: &[&str]) -> Option<usize> {
    headers.iter().position(|h| {
        let h = h.trim().trim_start_matches('\u{feff}').to_lowercase();
        aliases.iter().any(|a| h == *a)
    })
}

fn require_column(headers: &csv::StringRecord, aliases: &[&str]) -> Result<usize> {
    column(headers, aliases).ok_or_else(|| Error::missing(aliases[0], "csv header"))
}

fn parse_dialoconan_csv(raw: &str) -> Result<DialogueCorpus> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(raw.as_bytes());
    let headers = reader.headers()?.clone();
    let id_col = require_column(&headers, &["dialogue_id"])?;
    let turn_col = require_column(&headers, &["turn_id"])?;
    let text_col = require_column(&headers, &["text"])?;
    let type_col = require_column(&headers, &["type"])?;
    let target_col = require_column(&headers, &["target"])?;

    // dialogue_id -> (first-seen order, topic, [(turn_id, type, text)])
    let mut grouped: BTreeMap<String, (usize, Topic, Vec<(usize, bool, String)>)> = BTreeMap::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let get = |col: usize| record.get(col).unwrap_or("").to_string();
        let id = get(id_col);
        let turn_id: usize = get(turn_col).trim().parse().map_err(|_| {
            Error::Schema(format!("row {}: turn_id `{}` is not an integer", row + 2, get(turn_col)))
        })?;
        let is_hate = match get(type_col).trim().to_uppercase().as_str() {
            "HS" => true,
            "CN" => false,
            other => {
                return Err(Error::Schema(format!(
                    "row {}: type `{other}` must be HS or CN",
                    row + 2
                )))
            }
        };
        let topic: Topic = get(target_col).parse()?;
        let order = grouped.len();
        let entry = grouped.entry(id).or_insert((order, topic, Vec::new()));
        if entry.1 != topic {
            return Err(Error::Schema(format!(
                "row {}: dialogue mixes topics {} and {}",
                row + 2,
                entry.1,
                topic
            )));
        }
        entry.2.push((turn_id, is_hate, get(text_col)));
    }

    let mut ordered: Vec<_> = grouped.into_iter().collect();
    ordered.sort_by_key(|(_, (order, _, _))| *order);
    let mut dialogues = Vec::with_capacity(ordered.len());
    for (id, (_, topic, mut rows)) in ordered {
        rows.sort_by_key(|(turn_id, _, _)| *turn_id);
        let pairs = pair_utterances(&id, rows);
        if pairs.is_empty() {
            log::warn!("dialogue {id}: no complete hate/counter pair, skipped");
            continue;
        }
        dialogues.push(Dialogue::from_pairs(id, topic, pairs)?);
    }
    Ok(DialogueCorpus::new(dialogues))
}

/// Pairs each hate utterance with the counter utterance that follows it.
/// Consecutive utterances of the same role are joined; a leading counter or a
/// trailing unanswered hate utterance is dropped.
fn pair_utterances(id: &str, rows: Vec<(usize, bool, String)>) -> Vec<(String, String)> {
    let mut merged: Vec<(bool, String)> = Vec::new();
    for (_, is_hate, text) in rows {
        match merged.last_mut() {
            Some((last_role, last_text)) if *last_role == is_hate => {
                last_text.push(' ');
                last_text.push_str(&text);
            }
            _ => merged.push((is_hate, text)),
        }
    }
    if merged.first().map(|(h, _)| !h).unwrap_or(false) {
        log::warn!("dialogue {id}: leading counter utterance dropped");
        merged.remove(0);
    }
    let mut pairs = Vec::new();
    let mut iter = merged.into_iter();
    while let Some((_, hate)) = iter.next() {
        match iter.next() {
            Some((_, counter)) => pairs.push((hate, counter)),
            None => log::warn!("dialogue {id}: trailing hate utterance without reply dropped"),
        }
    }
    pairs
}

fn parse_conan_pairs_csv(raw: &str) -> Result<DialogueCorpus> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(raw.as_bytes());
    let headers = reader.headers()?.clone();
    let hate_col = require_column(&headers, &["hate_speech", "hatespeech", "hs", "hate"])?;
    let counter_col = require_column(
        &headers,
        &["counter_narrative", "counterspeech", "counter_speech", "cn", "counter"],
    )?;
    let target_col = column(&headers, &["target"]);

    let mut dialogues = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let hate = record.get(hate_col).unwrap_or("");
        let counter = record.get(counter_col).unwrap_or("");
        // The original pair release only covers islamophobic messages.
        let topic = match target_col.and_then(|c| record.get(c)) {
            Some(t) if !t.trim().is_empty() => t.parse()?,
            _ => Topic::Muslims,
        };
        dialogues.push(Dialogue::from_pairs(
            format!("conan-{row}"),
            topic,
            [(hate, counter)],
        )?);
    }
    Ok(DialogueCorpus::new(dialogues))
}

/// One training unit for the generator: prior turns, the current hate
/// message and the operator's reply.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationExample {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub context: Vec<(String, String)>,
    pub query: String,
    pub response: String,
    pub topic: Topic,
}

/// One example per turn, with all strictly earlier turns as context.
pub fn build_generation_examples(corpus: &DialogueCorpus) -> Vec<GenerationExample> {
    let mut examples = Vec::with_capacity(corpus.turn_count());
    for dialogue in &corpus.dialogues {
        let mut context: Vec<(String, String)> = Vec::with_capacity(dialogue.turns.len());
        for turn in &dialogue.turns {
            examples.push(GenerationExample {
                dialogue_id: dialogue.dialogue_id.clone(),
                turn_index: turn.turn_index,
                context: context.clone(),
                query: turn.hate_text.clone(),
                response: turn.counter_text.clone(),
                topic: dialogue.topic,
            });
            context.push((turn.hate_text.clone(), turn.counter_text.clone()));
        }
    }
    examples
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn canonical_three_turn_dialogue() {
        let f = write_tmp(
            r#"{"dialogue_id": "d1", "topic": "MIGRANTS", "turns": [{"hate": "a  b", "counter": " C "}, {"hate": "d", "counter": "e"}, {"hate": "f", "counter": "g"}]}"#,
        );
        let corpus = load_dialogue_corpus(f.path(), CorpusFormat::Canonical).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.dialogues[0].turns.len(), 3);
        assert_eq!(corpus.dialogues[0].turns[0].hate_text, "a b");
        assert_eq!(corpus.dialogues[0].turns[0].counter_text, "C");
        assert_eq!(corpus.dialogues[0].turns[2].turn_index, 2);
    }

    #[test]
    fn conan_pairs_become_one_turn_dialogues() {
        let f = write_tmp("HATE_SPEECH,COUNTER_NARRATIVE,TARGET,EXTRA\nh1,c1,JEWS,x\nh2,c2,WOMEN,y\nh3,c3,,z\n");
        let corpus = load_dialogue_corpus(f.path(), CorpusFormat::ConanPairs).unwrap();
        assert_eq!(corpus.len(), 3);
        assert!(corpus.dialogues.iter().all(|d| d.turns.len() == 1));
        assert_eq!(corpus.dialogues[0].dialogue_id, "conan-0");
        assert_eq!(corpus.dialogues[2].topic, Topic::Muslims);
    }

    #[test]
    fn dialoconan_csv_groups_and_orders_turns() {
        let f = write_tmp(
            "text,TARGET,dialogue_id,turn_id,type,source\n\
             second reply,JEWS,7,3,CN,x\n\
             first hate,JEWS,7,0,HS,x\n\
             first reply,JEWS,7,1,CN,x\n\
             second hate,JEWS,7,2,HS,x\n\
             only hate,WOMEN,8,0,HS,x\n\
             only reply,WOMEN,8,1,CN,x\n",
        );
        let corpus = load_dialogue_corpus(f.path(), CorpusFormat::Dialoconan).unwrap();
        assert_eq!(corpus.len(), 2);
        let d = &corpus.dialogues[0];
        assert_eq!(d.dialogue_id, "7");
        assert_eq!(d.turns[0].hate_text, "first hate");
        assert_eq!(d.turns[1].counter_text, "second reply");
    }

    #[test]
    fn missing_column_names_the_field() {
        let f = write_tmp("dialogue_id,turn_id,text,target\n1,0,x,JEWS\n");
        let err = load_dialogue_corpus(f.path(), CorpusFormat::Dialoconan).unwrap_err();
        assert!(matches!(err, Error::MissingField { ref field, .. } if field == "type"), "{err}");

        let f = write_tmp(r#"{"dialogue_id": "d", "turns": []}"#);
        let err = load_dialogue_corpus(f.path(), CorpusFormat::Canonical).unwrap_err();
        assert!(matches!(err, Error::MissingField { ref field, .. } if field == "topic"));
    }

    #[test]
    fn empty_file_is_an_empty_corpus_error() {
        let f = write_tmp("  \n");
        let err = load_dialogue_corpus(f.path(), CorpusFormat::Canonical).unwrap_err();
        assert!(matches!(err, Error::EmptyCorpus(_)));
    }

    #[test]
    fn examples_carry_growing_context() {
        let d = Dialogue::from_pairs("d", Topic::Jews, [("h0", "c0"), ("h1", "c1"), ("h2", "c2")]).unwrap();
        let examples = build_generation_examples(&DialogueCorpus::new(vec![d]));
        let lens: Vec<_> = examples.iter().map(|e| e.context.len()).collect();
        assert_eq!(lens, vec![0, 1, 2]);
        assert_eq!(examples[2].context[1], ("h1".to_string(), "c1".to_string()));
        assert_eq!(examples[2].query, "h2");
    }

    #[test]
    fn topic_aliases_parse() {
        assert_eq!("LGBT+".parse::<Topic>().unwrap(), Topic::Lgbt);
        assert_eq!("people of color".parse::<Topic>().unwrap(), Topic::PeopleOfColor);
        assert!("DISABLED".parse::<Topic>().is_err());
    }
}
