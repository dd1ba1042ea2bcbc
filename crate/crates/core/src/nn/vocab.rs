use std::collections::{BTreeMap, HashMap};

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::text::tokenize;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const SEP: &str = "<sep>";
pub const CLS: &str = "<cls>";

const SPECIALS: [&str; 6] = [PAD, UNK, BOS, EOS, SEP, CLS];

/// Word-level vocabulary. Ids 0..6 are the fixed special tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
}

impl From<VocabRepr> for Vocab {
    fn from(r: VocabRepr) -> Self {
        let index = r
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab {
            tokens: r.tokens,
            index,
        }
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr { tokens: v.tokens }
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Self::from(VocabRepr {
            tokens: SPECIALS.iter().map(|s| s.to_string()).collect(),
        })
    }
}

impl Vocab {
    /// Builds from texts, keeping tokens seen at least `min_count` times, in
    /// lexicographic order so that the result does not depend on text order.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            for tok in tokenize(text) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut vocab = Vocab::default();
        for (tok, n) in counts {
            if n >= min_count.max(1) {
                vocab.add(&tok);
            }
        }
        vocab
    }

    /// Adds a token if absent and returns its id.
    pub fn add(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    /// Appends extension tokens (control codes, type tokens).
    pub fn extend<S: AsRef<str>>(&mut self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.add(t.as_ref())).collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(1)
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens.get(id as usize).map(String::as_str).unwrap_or(UNK)
    }

    pub fn special(&self, token: &str) -> u32 {
        self.id(token).expect("special tokens are always present")
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize(text).iter().map(|t| self.id_or_unk(t)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    /// `[CLS] text`, truncated to `max_len` ids.
    pub fn encode_single(&self, text: &str, max_len: usize) -> Vec<u32> {
        let mut ids = vec![self.special(CLS)];
        ids.extend(self.encode(text));
        ids.truncate(max_len);
        ids
    }

    /// `[CLS] first [SEP] second`, truncated to `max_len` ids by trimming
    /// the longer segment first.
    pub fn encode_pair(&self, first: &str, second: &str, max_len: usize) -> Vec<u32> {
        let mut a = self.encode(first);
        let mut b = self.encode(second);
        let budget = max_len.saturating_sub(2);
        while a.len() + b.len() > budget {
            if a.len() >= b.len() {
                a.pop();
            } else {
                b.pop();
            }
        }
        let mut ids = Vec::with_capacity(a.len() + b.len() + 2);
        ids.push(self.special(CLS));
        ids.extend(a);
        ids.push(self.special(SEP));
        ids.extend(b);
        ids
    }
}

/// Right-pads id sequences into a `(batch, len)` id tensor and a matching
/// `f32` attention mask (1 for real tokens).
pub fn pad_batch(seqs: &[Vec<u32>]) -> Result<(Tensor, Tensor)> {
    let len = seqs.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let mut ids = Vec::with_capacity(seqs.len() * len);
    let mut mask = Vec::with_capacity(seqs.len() * len);
    for s in seqs {
        for i in 0..len {
            match s.get(i) {
                Some(&id) => {
                    ids.push(id);
                    mask.push(1f32);
                }
                None => {
                    ids.push(0);
                    mask.push(0f32);
                }
            }
        }
    }
    let dev = super::device();
    Ok((
        Tensor::from_vec(ids, (seqs.len(), len), &dev)?,
        Tensor::from_vec(mask, (seqs.len(), len), &dev)?,
    ))
}
