//! Beam search and greedy decoding over a [`Seq2Seq`] model.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use candle_core::{Tensor, D};

use super::model::{Memory, Seq2Seq};
use crate::error::Result;
use crate::nn::device;
use crate::nn::ops::log_softmax_last;

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Generated tokens, EOS excluded.
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    pub finished: bool,
    steps: usize,
}

impl Hypothesis {
    /// Log-probability per generated token (EOS included).
    pub fn score(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.log_prob / self.steps as f64
        }
    }
}

fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score()
        .partial_cmp(&a.score())
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Last-position log-probabilities for each row of `ids`.
fn next_log_probs(model: &Seq2Seq, memory: &Memory, ids: Vec<Vec<u32>>) -> Result<Vec<Vec<f32>>> {
    let rows = ids.len();
    let len = ids[0].len();
    let flat: Vec<u32> = ids.into_iter().flatten().collect();
    let ids = Tensor::from_vec(flat, (rows, len), &device())?;
    let logits = model.decode(memory, &ids)?;
    let last = logits.narrow(1, len - 1, 1)?.squeeze(1)?;
    Ok(log_softmax_last(&last)?.to_vec2::<f32>()?)
}

/// Length-normalized beam search for one source (`memory` has batch 1).
/// `banned` tokens are never emitted. Returns the final beams, best first.
pub fn beam_search(
    model: &Seq2Seq,
    memory: &Memory,
    prefix: &[u32],
    eos: u32,
    width: usize,
    max_new_tokens: usize,
    banned: &BTreeSet<u32>,
) -> Result<Vec<Hypothesis>> {
    let width = width.max(1);
    let mut beams = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
        steps: 0,
    }];
    for _ in 0..max_new_tokens {
        let live: Vec<&Hypothesis> = beams.iter().filter(|h| !h.finished).collect();
        if live.is_empty() {
            break;
        }
        let ids: Vec<Vec<u32>> = live
            .iter()
            .map(|h| prefix.iter().chain(&h.tokens).copied().collect())
            .collect();
        let mem = memory.repeat_row(0, live.len())?;
        let rows = next_log_probs(model, &mem, ids)?;
        let mut pool: Vec<Hypothesis> = beams.iter().filter(|h| h.finished).cloned().collect();
        for (h, row) in live.iter().zip(rows) {
            let mut cands: Vec<(u32, f32)> = row
                .iter()
                .enumerate()
                .filter(|(t, _)| !banned.contains(&(*t as u32)))
                .map(|(t, &lp)| (t as u32, lp))
                .collect();
            cands.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
            for &(tok, lp) in cands.iter().take(width) {
                let mut next = (*h).clone();
                next.log_prob += f64::from(lp);
                next.steps += 1;
                if tok == eos {
                    next.finished = true;
                } else {
                    next.tokens.push(tok);
                }
                pool.push(next);
            }
        }
        pool.sort_by(rank);
        pool.truncate(width);
        beams = pool;
    }
    beams.sort_by(rank);
    Ok(beams)
}

/// Argmax decoding, one token at a time.
pub fn greedy_decode(
    model: &Seq2Seq,
    memory: &Memory,
    prefix: &[u32],
    eos: u32,
    max_new_tokens: usize,
    banned: &BTreeSet<u32>,
) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    let mask: Vec<f32> = (0..model.vocab_size())
        .map(|t| if banned.contains(&(t as u32)) { f32::NEG_INFINITY } else { 0.0 })
        .collect();
    let mask = Tensor::new(mask, &device())?;
    for _ in 0..max_new_tokens {
        let ids: Vec<u32> = prefix.iter().chain(&out).copied().collect();
        let len = ids.len();
        let logits = model.decode(memory, &Tensor::from_vec(ids, (1, len), &device())?)?;
        let last = logits.narrow(1, len - 1, 1)?.squeeze(1)?.squeeze(0)?;
        let tok = (last + &mask)?.argmax(D::Minus1)?.to_scalar::<u32>()?;
        if tok == eos {
            break;
        }
        out.push(tok);
    }
    Ok(out)
}
