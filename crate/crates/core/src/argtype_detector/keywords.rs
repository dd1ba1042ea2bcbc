//! Topic keyword curation, lexical expansion and keyword masking.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{DialogueCorpus, Topic};
use crate::error::{Error, Result};
use crate::text::MASK_TOKEN;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pos {
    Noun,
    Verb,
    Adjective,
    Adverb,
    Interjection,
    Other,
}

impl Pos {
    /// Parts of speech eligible as topic keywords.
    pub fn is_content(self) -> bool {
        !matches!(self, Pos::Other)
    }
}

/// Part-of-speech tagging of single lowercased tokens.
pub trait PosTagger {
    fn tag(&self, token: &str) -> Pos;
}

/// Derivationally related forms and pertainyms of a lemma.
pub trait Lexicon {
    fn related_forms(&self, lemma: &str) -> Vec<String>;
    fn pertainyms(&self, lemma: &str) -> Vec<String>;
}

pub trait Pluralizer {
    fn plural(&self, word: &str) -> String;
}

const FUNCTION_WORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for",
    "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "herself",
    "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just",
    "me", "might", "more", "most", "must", "my", "myself", "no", "nor", "not", "of", "off", "on",
    "once", "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "same",
    "shall", "she", "should", "so", "some", "such", "than", "that", "the", "their", "theirs",
    "them", "themselves", "then", "there", "these", "they", "this", "those", "through", "to",
    "too", "under", "until", "up", "us", "very", "was", "we", "were", "what", "when", "where",
    "which", "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours",
    "yourself", "yourselves",
];

const INTERJECTIONS: &[&str] = &["oh", "wow", "hey", "ugh", "alas", "yes", "ok", "okay", "ouch", "oops"];

/// Closed-class word list plus suffix heuristics. Unknown alphabetic words
/// default to nouns; digits and punctuation are `Other`.
#[derive(Clone, Debug, Default)]
pub struct BundledTagger;

impl PosTagger for BundledTagger {
    fn tag(&self, token: &str) -> Pos {
        if token.is_empty() || !token.chars().all(|c| c.is_alphabetic() || c == '-' || c == '\'') {
            return Pos::Other;
        }
        if !token.chars().any(char::is_alphabetic) || FUNCTION_WORDS.contains(&token) {
            return Pos::Other;
        }
        if INTERJECTIONS.contains(&token) {
            return Pos::Interjection;
        }
        if token.len() > 4 && token.ends_with("ly") {
            return Pos::Adverb;
        }
        for suffix in ["ous", "ful", "ive", "able", "ible", "ic", "ish", "less", "al"] {
            if token.len() > suffix.len() + 2 && token.ends_with(suffix) {
                return Pos::Adjective;
            }
        }
        for suffix in ["ing", "ed", "ize", "ise", "ate"] {
            if token.len() > suffix.len() + 2 && token.ends_with(suffix) {
                return Pos::Verb;
            }
        }
        Pos::Noun
    }
}

/// Lemma table of related forms and pertainyms, loadable from JSON
/// `{"related": {lemma: [..]}, "pertainyms": {lemma: [..]}}`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TableLexicon {
    #[serde(default)]
    pub related: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub pertainyms: BTreeMap<String, Vec<String>>,
}

impl TableLexicon {
    /// A small built-in table covering common target-group vocabulary.
    pub fn bundled() -> Self {
        serde_json::from_str(include_str!("../../data/lexicon.json")).expect("bundled lexicon is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::artifact::read_json(path)
    }
}

impl Lexicon for TableLexicon {
    fn related_forms(&self, lemma: &str) -> Vec<String> {
        self.related.get(lemma).cloned().unwrap_or_default()
    }

    fn pertainyms(&self, lemma: &str) -> Vec<String> {
        self.pertainyms.get(lemma).cloned().unwrap_or_default()
    }
}

/// English suffix rules with a few irregular nouns.
#[derive(Clone, Debug, Default)]
pub struct SuffixPluralizer;

impl Pluralizer for SuffixPluralizer {
    fn plural(&self, word: &str) -> String {
        const IRREGULAR: [(&str, &str); 6] = [
            ("man", "men"),
            ("woman", "women"),
            ("child", "children"),
            ("person", "people"),
            ("foot", "feet"),
            ("mouse", "mice"),
        ];
        if let Some((_, p)) = IRREGULAR.iter().find(|(s, _)| *s == word) {
            return p.to_string();
        }
        // Already plural: irregular plurals and a bare trailing `s`.
        if IRREGULAR.iter().any(|(_, p)| word.ends_with(p))
            || (word.ends_with('s') && !["ss", "us", "is"].iter().any(|s| word.ends_with(s)))
        {
            return word.to_string();
        }
        for (s, p) in IRREGULAR {
            if let Some(stem) = word.strip_suffix(s) {
                if stem.ends_with('-') {
                    return format!("{stem}{p}");
                }
            }
        }
        let vowel = |c: char| "aeiou".contains(c);
        if let Some(stem) = word.strip_suffix('y') {
            if stem.chars().last().is_some_and(|c| !vowel(c)) {
                return format!("{stem}ies");
            }
        }
        if ["s", "x", "z", "ch", "sh"].iter().any(|s| word.ends_with(s)) {
            return format!("{word}es");
        }
        format!("{word}s")
    }
}

/// Per-topic keyword sets; a keyword belongs to exactly one topic.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopicKeywordSet {
    pub topics: BTreeMap<Topic, BTreeSet<String>>,
}

impl TopicKeywordSet {
    pub fn get(&self, topic: Topic) -> Option<&BTreeSet<String>> {
        self.topics.get(&topic)
    }

    pub fn topic_of(&self, word: &str) -> Option<Topic> {
        self.topics
            .iter()
            .find(|(_, set)| set.contains(word))
            .map(|(t, _)| *t)
    }

    pub fn all_keywords(&self) -> BTreeSet<&str> {
        self.topics.values().flatten().map(String::as_str).collect()
    }

    pub fn len(&self) -> usize {
        self.topics.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_disjoint(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.topics.values().flatten().all(|w| seen.insert(w))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::artifact::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let set: TopicKeywordSet = crate::artifact::read_json(path)?;
        if !set.is_disjoint() {
            return Err(Error::Schema(format!("{}: keyword sets overlap across topics", path.display())));
        }
        Ok(set)
    }
}

/// How the "rare in other topics" clause of keyword curation is read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeywordReading {
    /// Present in exactly one topic, at most `max_count` times in total.
    Literal,
    /// Most frequent in one topic and at most `max_count` times across all
    /// other topics together.
    Leakage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeywordRule {
    pub reading: KeywordReading,
    pub max_count: usize,
}

impl Default for KeywordRule {
    fn default() -> Self {
        KeywordRule {
            reading: KeywordReading::Literal,
            max_count: 5,
        }
    }
}

/// Whitespace/punctuation split used for keyword counting: maximal runs of
/// word characters, lowercased.
pub fn keyword_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if is_word_char(c) {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Per-topic token counts over hate and counter texts.
pub fn topic_token_counts(corpus: &DialogueCorpus) -> BTreeMap<String, BTreeMap<Topic, usize>> {
    let mut counts: BTreeMap<String, BTreeMap<Topic, usize>> = BTreeMap::new();
    for (dialogue, turn) in corpus.turns() {
        for text in [&turn.hate_text, &turn.counter_text] {
            for tok in keyword_tokens(text) {
                *counts.entry(tok).or_default().entry(dialogue.topic).or_default() += 1;
            }
        }
    }
    counts
}

pub fn curate_topic_keywords(corpus: &DialogueCorpus, tagger: &dyn PosTagger, rule: &KeywordRule) -> TopicKeywordSet {
    let counts = topic_token_counts(corpus);
    let topics: BTreeSet<Topic> = corpus.dialogues.iter().map(|d| d.topic).collect();
    if topics.len() < 2 {
        log::warn!("corpus covers {} topic(s); keyword exclusivity is vacuous", topics.len());
    }
    let mut out = TopicKeywordSet::default();
    for (token, per_topic) in counts {
        if !tagger.tag(&token).is_content() {
            continue;
        }
        let total: usize = per_topic.values().sum();
        let owner = match rule.reading {
            KeywordReading::Literal => {
                (per_topic.len() == 1 && total <= rule.max_count).then(|| *per_topic.keys().next().unwrap())
            }
            KeywordReading::Leakage => {
                let max = *per_topic.values().max().unwrap();
                let leaders: Vec<Topic> = per_topic.iter().filter(|(_, &n)| n == max).map(|(t, _)| *t).collect();
                (leaders.len() == 1 && total - max <= rule.max_count).then(|| leaders[0])
            }
        };
        if let Some(topic) = owner {
            out.topics.entry(topic).or_default().insert(token);
        }
    }
    out
}

/// Adds related forms, pertainyms and plurals. Words claimed by more than
/// one topic afterwards are removed from all of them.
pub fn expand_keywords(keywords: &TopicKeywordSet, lexicon: &dyn Lexicon, pluralizer: &dyn Pluralizer) -> TopicKeywordSet {
    let mut expanded: BTreeMap<Topic, BTreeSet<String>> = BTreeMap::new();
    for (&topic, words) in &keywords.topics {
        let set = expanded.entry(topic).or_default();
        for w in words {
            let mut forms = vec![w.clone()];
            forms.extend(lexicon.related_forms(w));
            forms.extend(lexicon.pertainyms(w));
            let plurals: Vec<String> = forms.iter().map(|f| pluralizer.plural(f)).collect();
            forms.extend(plurals);
            set.extend(forms.into_iter().map(|f| f.to_lowercase()));
        }
    }
    let mut owners: BTreeMap<String, usize> = BTreeMap::new();
    for words in expanded.values() {
        for w in words {
            *owners.entry(w.clone()).or_default() += 1;
        }
    }
    for words in expanded.values_mut() {
        words.retain(|w| owners[w] == 1);
    }
    TopicKeywordSet { topics: expanded }
}

/// Word characters for masking: letters, digits, `_` and `-`, so that
/// hyphenated compounds count as one word.
pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

fn mask_with(text: &str, hit: impl Fn(&str) -> bool) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if rest.starts_with(MASK_TOKEN) {
            out.push_str(MASK_TOKEN);
            rest = &rest[MASK_TOKEN.len()..];
        } else if is_word_char(c) {
            let end = rest.find(|ch: char| !is_word_char(ch)).unwrap_or(rest.len());
            let word = &rest[..end];
            if hit(&word.to_lowercase()) {
                out.push_str(MASK_TOKEN);
            } else {
                out.push_str(word);
            }
            rest = &rest[end..];
        } else {
            out.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    out
}

/// Replaces every whole-word, case-insensitive occurrence of a keyword of
/// `topic` with `#MASK#`; everything else is copied unchanged.
pub fn mask_text(text: &str, keywords: &TopicKeywordSet, topic: Topic) -> String {
    match keywords.get(topic) {
        Some(set) if !set.is_empty() => mask_with(text, |w| set.contains(w)),
        _ => text.to_string(),
    }
}

/// Masks the keywords of every topic.
pub fn mask_text_all(text: &str, keywords: &TopicKeywordSet) -> String {
    let all = keywords.all_keywords();
    if all.is_empty() {
        return text.to_string();
    }
    mask_with(text, |w| all.contains(w))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kw(topic: Topic, words: &[&str]) -> TopicKeywordSet {
        let mut set = TopicKeywordSet::default();
        set.topics.insert(topic, words.iter().map(|w| w.to_string()).collect());
        set
    }

    #[test]
    fn masking_examples() {
        let k = kw(Topic::Muslims, &["muslims", "muslim"]);
        assert_eq!(mask_text("Muslims are bad", &k, Topic::Muslims), "#MASK# are bad");
        assert_eq!(mask_text("nothing here", &k, Topic::Muslims), "nothing here");
        assert_eq!(
            mask_text("anti-muslim muslim", &k, Topic::Muslims),
            "anti-muslim #MASK#"
        );
        assert_eq!(mask_text("Muslims!", &k, Topic::Jews), "Muslims!");
    }

    #[test]
    fn mask_token_is_protected() {
        let k = kw(Topic::Women, &["mask", "women"]);
        let once = mask_text("women wear a mask", &k, Topic::Women);
        assert_eq!(once, "#MASK# wear a #MASK#");
        assert_eq!(mask_text(&once, &k, Topic::Women), once);
    }

    #[test]
    fn plurals() {
        let p = SuffixPluralizer;
        assert_eq!(p.plural("migrant"), "migrants");
        assert_eq!(p.plural("woman"), "women");
        assert_eq!(p.plural("human"), "humans");
        assert_eq!(p.plural("trans-woman"), "trans-women");
        assert_eq!(p.plural("minority"), "minorities");
        assert_eq!(p.plural("church"), "churches");
        assert_eq!(p.plural("day"), "days");
        assert_eq!(p.plural("women"), "women");
        assert_eq!(p.plural("muslims"), "muslims");
        assert_eq!(p.plural("kindness"), "kindnesses");
        assert_eq!(p.plural("bus"), "buses");
    }

    #[test]
    fn bundled_lexicon_relates_islam() {
        let lex = TableLexicon::bundled();
        let set = expand_keywords(&kw(Topic::Muslims, &["islam"]), &lex, &SuffixPluralizer);
        assert!(set.get(Topic::Muslims).unwrap().contains("islamic"));
    }

    #[test]
    fn collisions_are_dropped_from_both_topics() {
        let mut lex = TableLexicon::default();
        lex.related.insert("alpha".into(), vec!["shared".into()]);
        lex.related.insert("beta".into(), vec!["shared".into()]);
        let mut set = kw(Topic::Jews, &["alpha"]);
        set.topics.insert(Topic::Women, ["beta".to_string()].into());
        let out = expand_keywords(&set, &lex, &SuffixPluralizer);
        assert!(out.is_disjoint());
        assert!(out.topic_of("shared").is_none());
        assert_eq!(out.topic_of("alphas"), Some(Topic::Jews));
    }

    #[test]
    fn tagger_filters_function_words() {
        let t = BundledTagger;
        assert_eq!(t.tag("the"), Pos::Other);
        assert_eq!(t.tag("unicorn"), Pos::Noun);
        assert_eq!(t.tag("quickly"), Pos::Adverb);
        assert_eq!(t.tag("42"), Pos::Other);
    }
}
