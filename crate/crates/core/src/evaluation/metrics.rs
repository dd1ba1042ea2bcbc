//! Corpus BLEU, Rouge-L and perplexity over the shared tokenizer.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::generator::{Generator, GeneratorBatch};
use crate::text::tokenize;

const MAX_ORDER: usize = 4;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped matches and candidate totals per order, plus hypothesis and
/// reference lengths.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    fn add(&mut self, hyp: &[String], reference: &[String]) {
        self.hyp_len += hyp.len();
        self.ref_len += reference.len();
        for n in 1..=MAX_ORDER {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            self.totals[n - 1] += hyp.len().saturating_sub(n - 1);
            self.matches[n - 1] += h
                .iter()
                .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }

    /// BLEU on a 0-100 scale; zero when any order has no match.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 || self.matches.contains(&0) {
            return 0.0;
        }
        let log_p: f64 = (0..MAX_ORDER)
            .map(|i| (self.matches[i] as f64 / self.totals[i] as f64).ln())
            .sum::<f64>()
            / MAX_ORDER as f64;
        let bp = if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        };
        100.0 * bp * log_p.exp()
    }
}

fn check_pairs(hypotheses: &[String], references: &[String]) -> Result<()> {
    if hypotheses.len() != references.len() {
        return Err(Error::Dimension(format!(
            "{} hypotheses vs {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(Error::EmptyCorpus("no hypotheses to score".into()));
    }
    Ok(())
}

/// Unsmoothed 4-gram corpus BLEU with brevity penalty, counts aggregated
/// over the whole corpus.
pub fn corpus_bleu(hypotheses: &[String], references: &[String]) -> Result<f64> {
    check_pairs(hypotheses, references)?;
    let mut stats = BleuStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        stats.add(&tokenize(h), &tokenize(r));
    }
    Ok(stats.score())
}

/// Add-one smoothed sentence BLEU, for per-item diagnostics only.
pub fn sentence_bleu_add_one(hypothesis: &str, reference: &str) -> f64 {
    let mut stats = BleuStats::default();
    stats.add(&tokenize(hypothesis), &tokenize(reference));
    if stats.hyp_len == 0 {
        return 0.0;
    }
    for i in 1..MAX_ORDER {
        stats.matches[i] += 1;
        stats.totals[i] += 1;
    }
    if stats.matches[0] == 0 {
        return 0.0;
    }
    stats.score()
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure with equal weight on precision and recall, in
/// [0, 1]. Empty input scores 0.
pub fn rouge_l(hypothesis: &str, reference: &str) -> f64 {
    let h = tokenize(hypothesis);
    let r = tokenize(reference);
    if h.is_empty() || r.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&h, &r) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / h.len() as f64;
    let rec = lcs / r.len() as f64;
    2.0 * p * rec / (p + rec)
}

/// Sentence-level Rouge-L averaged over the corpus, on a 0-100 scale.
pub fn mean_rouge_l(hypotheses: &[String], references: &[String]) -> Result<f64> {
    check_pairs(hypotheses, references)?;
    let total: f64 = hypotheses.iter().zip(references).map(|(h, r)| rouge_l(h, r)).sum();
    Ok(100.0 * total / hypotheses.len() as f64)
}

/// Gold-token log-probabilities under teacher forcing, on loss positions.
pub trait TokenScorer {
    fn token_log_probs(&self, batches: &[GeneratorBatch]) -> Result<Vec<Vec<f64>>>;
}

impl TokenScorer for Generator {
    fn token_log_probs(&self, batches: &[GeneratorBatch]) -> Result<Vec<Vec<f64>>> {
        Generator::token_log_probs(self, batches)
    }
}

/// `exp` of the token-weighted mean cross-entropy.
pub fn perplexity(scorer: &dyn TokenScorer, batches: &[GeneratorBatch]) -> Result<f64> {
    if batches.is_empty() {
        return Err(Error::EmptyCorpus("no examples to score".into()));
    }
    let lps = scorer.token_log_probs(batches)?;
    let n: usize = lps.iter().map(Vec::len).sum();
    if n == 0 {
        return Err(Error::EmptyCorpus("no target tokens to score".into()));
    }
    let nll = -lps.iter().flatten().sum::<f64>() / n as f64;
    Ok(nll.exp())
}
