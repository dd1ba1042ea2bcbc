use std::collections::BTreeSet;

use counterarg_core::evaluation::*;
use counterarg_core::features::{ControlCode, FeatureSet};
use counterarg_core::generator::*;
use counterarg_core::nn::TrainConfig;
use counterarg_core::synthetic::feature_corpus;
use proptest::prelude::*;
use serde::Deserialize;

#[derive(Deserialize)]
struct OraclePair {
    hypothesis: String,
    reference: String,
    rouge_l: f64,
}

#[derive(Deserialize)]
struct Oracle {
    pairs: Vec<OraclePair>,
    corpus_bleu: f64,
    mean_rouge_l: f64,
}

fn oracle() -> Oracle {
    serde_json::from_str(include_str!("fixtures/metric_oracle.json")).unwrap()
}

#[test]
fn metrics_match_the_frozen_reference_scores() {
    let o = oracle();
    let hyps: Vec<String> = o.pairs.iter().map(|p| p.hypothesis.clone()).collect();
    let refs: Vec<String> = o.pairs.iter().map(|p| p.reference.clone()).collect();
    let bleu = corpus_bleu(&hyps, &refs).unwrap();
    assert!((bleu - o.corpus_bleu).abs() < 1e-4, "{bleu} vs {}", o.corpus_bleu);
    for p in &o.pairs {
        let r = rouge_l(&p.hypothesis, &p.reference);
        assert!((r - p.rouge_l).abs() < 1e-4, "{:?}: {r} vs {}", p.hypothesis, p.rouge_l);
    }
    let mean = mean_rouge_l(&hyps, &refs).unwrap();
    assert!((mean - o.mean_rouge_l).abs() < 1e-4);
}

#[test]
fn rouge_of_one_substitution_in_three() {
    assert!((rouge_l("the cat sat", "the cat ate") - 0.6667).abs() < 1e-4);
}

fn sentence(min: usize) -> impl Strategy<Value = String> {
    prop::collection::vec("[a-z]{1,6}", min..12).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn identical_corpora_score_perfectly(s in prop::collection::vec(sentence(4), 1..6)) {
        prop_assert!((corpus_bleu(&s, &s).unwrap() - 100.0).abs() < 1e-9);
        prop_assert!((mean_rouge_l(&s, &s).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn rouge_is_symmetric_and_bounded(a in sentence(1), b in sentence(1)) {
        let ab = rouge_l(&a, &b);
        prop_assert!((ab - rouge_l(&b, &a)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn bleu_stays_in_range(h in prop::collection::vec(sentence(1), 1..5), r in prop::collection::vec(sentence(1), 5)) {
        let r = &r[..h.len()];
        let b = corpus_bleu(&h, r).unwrap();
        prop_assert!((0.0..=100.0 + 1e-9).contains(&b));
    }
}

fn small_config(steps: usize) -> GridConfig {
    GridConfig {
        generation: GenerationConfig {
            max_source_len: 96,
            max_target_len: 32,
            beam_width: 2,
            model: Seq2SeqSpec::tiny(),
            train: TrainConfig {
                learning_rate: 1e-3,
                batch_size: 16,
                max_steps: Some(steps),
                max_epochs: 1000,
                patience: 1000,
                seed: 0,
                ..Default::default()
            },
            ..Default::default()
        },
        validation_fraction: 0.1,
        test_fraction: 0.15,
        split_seed: 0,
        max_eval_examples: Some(20),
        workers: 1,
    }
}

#[test]
fn untrained_uniform_model_has_perplexity_equal_to_vocab_size() {
    let corpus = feature_corpus(20, 2, 3);
    let examples = annotated_examples(&corpus);
    let cfg = GenerationConfig { model: Seq2SeqSpec::tiny(), max_source_len: 96, max_target_len: 32, ..Default::default() };
    let g = Generator::new(cfg, Generator::build_vocab(&examples)).unwrap();
    for name in ["lm_head.weight", "lm_head.bias"] {
        let var = g.store().get(name).unwrap();
        var.set(&var.as_tensor().zeros_like().unwrap()).unwrap();
    }
    let batches = g.batches(&examples).unwrap();
    let ppl = perplexity(&g, &batches).unwrap();
    let v = g.vocab().len() as f64;
    assert!((ppl - v).abs() / v < 0.02, "{ppl} vs {v}");

    let mut reversed = batches.clone();
    reversed.reverse();
    let again = perplexity(&g, &reversed).unwrap();
    assert!((again - ppl).abs() / ppl < 1e-9);
}

#[test]
fn perplexity_ignores_batch_order() {
    let corpus = feature_corpus(20, 2, 4);
    let examples = annotated_examples(&corpus);
    let cfg = GenerationConfig {
        families: counterarg_core::features::FeatureFamily::ALL.into(),
        model: Seq2SeqSpec::tiny(),
        max_source_len: 96,
        max_target_len: 32,
        ..Default::default()
    };
    let g = Generator::new(cfg, Generator::build_vocab(&examples)).unwrap();
    let batches = g.batches(&examples).unwrap();
    let ppl = perplexity(&g, &batches).unwrap();
    let mut shuffled = batches.clone();
    shuffled.rotate_left(7);
    shuffled.swap(0, 3);
    let again = perplexity(&g, &shuffled).unwrap();
    assert!((again - ppl).abs() / ppl < 1e-6, "{again} vs {ppl}");
}

#[test]
fn grid_has_sixteen_distinct_rows() {
    let grid = feature_grid();
    assert_eq!(grid.len(), 16);
    assert_eq!(grid.iter().map(|r| r.id).collect::<Vec<_>>(), (1..=16).collect::<Vec<_>>());
    let sets: BTreeSet<_> = grid.iter().map(|r| r.families.iter().copied().collect::<BTreeSet<_>>()).collect();
    assert_eq!(sets.len(), 16);
    assert!(grid[0].families.is_empty());
}

#[test]
fn baseline_batches_carry_no_code_tokens() {
    let corpus = feature_corpus(10, 2, 6);
    let examples = annotated_examples(&corpus);
    let cfg = GenerationConfig { model: Seq2SeqSpec::tiny(), max_source_len: 96, max_target_len: 32, ..Default::default() };
    let g = Generator::new(cfg, Generator::build_vocab(&examples)).unwrap();
    for b in g.batches(&examples).unwrap() {
        for &id in b.encoder_ids.iter().chain(&b.decoder_input_ids) {
            assert!(ControlCode::ALL.iter().all(|c| g.vocab().token(id) != c.token()));
        }
    }
    let full = GenerationConfig {
        families: counterarg_core::features::FeatureFamily::ALL.into(),
        model: Seq2SeqSpec::tiny(),
        max_source_len: 96,
        max_target_len: 32,
        ..Default::default()
    };
    let g = Generator::new(full, Generator::build_vocab(&examples)).unwrap();
    let codes: BTreeSet<u32> = g.code_ids().into_values().collect();
    let coded = g.batches(&examples).unwrap().iter().filter(|b| b.decoder_input_ids.iter().any(|i| codes.contains(i))).count();
    assert!(coded > 0);
}

#[test]
fn a_row_reruns_to_identical_metrics() {
    let corpus = feature_corpus(40, 2, 1);
    let cfg = small_config(20);
    let split = GridSplit::new(&corpus, &cfg).unwrap();
    let row = &select_rows("argType+big5").unwrap()[0];
    let (a, _, ra) = run_row(row, &split, &cfg).unwrap();
    let (b, _, rb) = run_row(row, &split, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(ra.len(), rb.len());
    for (x, y) in ra.iter().zip(&rb) {
        assert_eq!(x.response, y.response);
    }
    assert_eq!(GridSplit::new(&corpus, &cfg).unwrap().digest(), split.digest());
}

#[test]
fn desired_codes_reach_the_decoder() {
    let corpus = feature_corpus(10, 1, 2);
    let e = &annotated_examples(&corpus)[0];
    let wanted: FeatureSet = e.response_features.clone();
    let p = feature_delta(&e.query_features, &wanted);
    assert!(p.decoder_codes.is_subset(&wanted));
    assert!(p.decoder_codes.is_disjoint(&e.query_features));
}

/// Full 16-row grid on the synthetic feature corpus; several minutes on one core.
#[test]
#[ignore]
fn every_code_row_beats_the_baseline_perplexity() {
    let corpus = feature_corpus(120, 2, 1);
    let reports = run_feature_grid(&corpus, &feature_grid(), &small_config(400), None).unwrap();
    let baseline = reports[0].ppl;
    for r in &reports[1..] {
        println!("{:2} {:28} ppl {:.3} (baseline {baseline:.3})", r.id, r.features, r.ppl);
        assert!(r.error.is_none());
        assert!(r.ppl < baseline, "row {} ppl {} vs baseline {baseline}", r.id, r.ppl);
    }
}
