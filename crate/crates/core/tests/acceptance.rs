//! Acceptance criteria 1-8. Each test prints one `PASS`/`FAIL` line.
//! Run with `cargo test --test acceptance -- --nocapture --test-threads 1`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use counterarg_core::annotator::merge_scheme_labels;
use counterarg_core::argtype_detector::*;
use counterarg_core::corpus::{Dialogue, DialogueCorpus, Topic};
use counterarg_core::evaluation::*;
use counterarg_core::features::{ControlCode, FeatureFamily, FeatureSet};
use counterarg_core::generator::*;
use counterarg_core::nn::{EncoderSpec, TrainConfig, Vocab};
use counterarg_core::rng::seeded;
use counterarg_core::scoring::macro_f1;
use counterarg_core::synthetic::*;
use counterarg_core::taxonomy::*;
use counterarg_core::value_detector::*;
use rand::seq::IndexedRandom;
use rand::Rng;

fn verdict(n: usize, name: &str, ok: bool, elapsed: Duration, limit: Duration, detail: &str) {
    let ok = ok && elapsed <= limit;
    println!(
        "criterion {n} {name}: {} ({detail}; {:.1}s, limit {}s)",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    assert!(ok, "criterion {n} failed: {detail}");
}

fn minutes(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

fn train_cfg(steps: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        batch_size: 16,
        max_steps: Some(steps),
        max_epochs: 1000,
        patience: 1000,
        seed: 3,
        ..Default::default()
    }
}

#[test]
fn criterion_1_loss_functions() {
    let t = Instant::now();
    let cfg = QuadrupleLossConfig::default();
    let cases: [([[f64; 2]; 4], f64); 3] = [
        ([[1.0, 0.0]; 4], 1.0),
        ([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]], -1.0),
        ([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 0.0]], 2.0),
    ];
    let mut ok = cases.iter().all(|(v, want)| {
        let got = quadruple_loss(&v[0], &v[1], &v[2], &v[3], &cfg).unwrap();
        (got - want).abs() < 1e-9
    });

    let mut rng = seeded(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let vs: Vec<Vec<f64>> = (0..4).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let (_, grads) = quadruple_loss_grad(&vs[0], &vs[1], &vs[2], &vs[3], &cfg).unwrap();
        for (which, grad) in grads.iter().enumerate() {
            for i in 0..vs[which].len() {
                let eval = |d: f64| {
                    let mut w = vs.clone();
                    w[which][i] += d;
                    quadruple_loss(&w[0], &w[1], &w[2], &w[3], &cfg).unwrap()
                };
                let numeric = (eval(1e-6) - eval(-1e-6)) / 2e-6;
                worst = worst.max((numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-6));
            }
        }
    }
    ok &= worst < 1e-4;

    let labels = vec![vec![1.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]];
    let zeros = vec![vec![0.0; 3]; 2];
    let w = MultiTaskWeights::default();
    let at_zero = multitask_loss([&zeros, &zeros, &zeros], [&labels, &labels, &labels], &w).unwrap();
    ok &= (at_zero - std::f64::consts::LN_2).abs() < 1e-9;

    let logits = vec![vec![1.5, -0.3, 2.0], vec![-1.0, 0.7, 0.1]];
    let bce: Vec<f64> = (0..3).map(|_| bce_mean(&logits, &labels).unwrap()).collect();
    let mut linear = true;
    for (a, b, c) in [(0.23, 0.33, 0.44), (1.0, 0.0, 0.0), (0.5, 0.1, 0.9)] {
        let mw = MultiTaskWeights { w_l1: a, w_l2: b, w_l3: c };
        let got = multitask_loss([&logits, &logits, &logits], [&labels, &labels, &labels], &mw).unwrap();
        linear &= (got - (a * bce[0] + b * bce[1] + c * bce[2])).abs() < 1e-12;
    }
    ok &= linear && (w.combine(1.0, 0.0, 0.0) - 0.23).abs() < 1e-12;

    verdict(1, "loss functions", ok, t.elapsed(), minutes(1), &format!("worst gradient rel. error {worst:.2e}, ln2 {at_zero:.6}"));
}

fn value_pred(decisions: &[u8]) -> ValuePrediction {
    ValuePrediction {
        text: "t".into(),
        l2: decisions
            .iter()
            .enumerate()
            .map(|(c, &d)| (format!("c{c}"), L2Score { prob: f64::from(d), decision: d }))
            .collect(),
    }
}

#[test]
fn criterion_2_set_logic() {
    let t = Instant::now();
    let mut ok = true;

    let mut rng = seeded(99);
    for _ in 0..2000 {
        let pick = |rng: &mut rand_chacha::ChaCha8Rng| -> FeatureSet {
            ControlCode::ALL.iter().filter(|_| rng.random_bool(0.3)).copied().collect()
        };
        let (q, r) = (pick(&mut rng), pick(&mut rng));
        let p = feature_delta(&q, &r);
        let enc: FeatureSet = q.iter().filter(|c| !r.contains(c)).copied().collect();
        let dec: FeatureSet = r.iter().filter(|c| !q.contains(c)).copied().collect();
        ok &= p.encoder_codes == enc && p.decoder_codes == dec;
    }

    for pattern in 0u8..8 {
        let votes: Vec<u8> = (0..3).map(|i| pattern >> i & 1).collect();
        let members: Vec<ValuePrediction> = votes.iter().map(|&v| value_pred(&[v])).collect();
        let want = u8::from(votes.iter().sum::<u8>() >= 2);
        ok &= combine_value_votes(&members).unwrap().l2["c0"].decision == want;
    }

    for pattern in 0u8..16 {
        let votes: Vec<bool> = (0..4).map(|i| pattern >> i & 1 == 1).collect();
        let yes = votes.iter().filter(|&&v| v).count();
        for mean in [0.3, 0.5, 0.7] {
            let want = yes >= 3 || (yes == 2 && mean > 0.5);
            let members: Vec<ArgTypeLabel> = votes
                .iter()
                .map(|&v| ArgTypeLabel { probs: [mean; ARG_TYPE_COUNT], decisions: [v; ARG_TYPE_COUNT] })
                .collect();
            ok &= combine_argtype_votes(&members).unwrap().decisions.iter().all(|&d| d == want);
        }
    }

    let table = [
        ("Means for Goal", ControlCode::GoalMeans),
        ("Goal for Means", ControlCode::GoalMeans),
        ("From Consequence", ControlCode::FromConsequence),
        ("From Source Authority", ControlCode::FromSourceAuthorityKnowledge),
        ("From Source Knowledge", ControlCode::FromSourceAuthorityKnowledge),
        ("Rule or Principle", ControlCode::RuleOrPrinciple),
    ];
    for (raw, code) in table {
        ok &= merge_scheme_labels(raw).ok() == Some(code);
        ok &= merge_scheme_labels(&raw.to_uppercase()).ok() == Some(code);
    }
    ok &= merge_scheme_labels("Analogy").is_err();

    verdict(2, "set logic", ok, t.elapsed(), minutes(1), "delta, 2^3 and 2^4 vote tables, scheme merge");
}

fn runs(text: &str) -> Vec<(bool, String)> {
    let mut out: Vec<(bool, String)> = Vec::new();
    for c in text.chars() {
        let w = c.is_alphanumeric() || c == '_' || c == '-';
        match out.last_mut() {
            Some((kind, s)) if *kind == w => s.push(c),
            _ => out.push((w, c.to_string())),
        }
    }
    out
}

struct AllNouns;

impl PosTagger for AllNouns {
    fn tag(&self, _: &str) -> Pos {
        Pos::Noun
    }
}

#[test]
fn criterion_3_masking() {
    let t = Instant::now();
    let mut rng = seeded(3);
    let shared = ["people", "always", "city", "news", "today"];
    let dialogues: Vec<Dialogue> = (0..200)
        .map(|i| {
            let topic = Topic::ALL[i % 6];
            let mut words: Vec<String> = (0..4).map(|_| shared.choose(&mut rng).unwrap().to_string()).collect();
            for _ in 0..rng.random_range(0..3) {
                words.push(format!("t{}w{}", i % 6, rng.random_range(0..6)));
            }
            if rng.random_bool(0.05) {
                words.push(format!("t{}w0", rng.random_range(0..6)));
            }
            Dialogue::from_pairs(format!("d{i}"), topic, [(words.join(" "), "fine".to_string())]).unwrap()
        })
        .collect();
    let corpus = DialogueCorpus::new(dialogues);

    let mut counts: BTreeMap<String, BTreeMap<Topic, usize>> = BTreeMap::new();
    for d in &corpus.dialogues {
        for turn in &d.turns {
            for text in [&turn.hate_text, &turn.counter_text] {
                for (w, s) in runs(text) {
                    if w {
                        *counts.entry(s.to_lowercase()).or_default().entry(d.topic).or_default() += 1;
                    }
                }
            }
        }
    }
    let rule = KeywordRule { reading: KeywordReading::Literal, max_count: 30 };
    let mut expected: BTreeMap<Topic, BTreeSet<String>> = BTreeMap::new();
    for (word, per) in &counts {
        if per.len() == 1 && per.values().sum::<usize>() <= rule.max_count {
            expected.entry(*per.keys().next().unwrap()).or_default().insert(word.clone());
        }
    }
    let got = curate_topic_keywords(&corpus, &AllNouns, &rule);
    let got_sets: BTreeMap<Topic, BTreeSet<String>> = got.topics.clone().into_iter().filter(|(_, s)| !s.is_empty()).collect();
    let mut ok = got_sets == expected;

    for d in &corpus.dialogues {
        let text = &d.turns[0].hate_text;
        let kws = got.get(d.topic).cloned().unwrap_or_default();
        let oracle: String = runs(text)
            .into_iter()
            .map(|(w, s)| if w && kws.contains(&s.to_lowercase()) { "#MASK#".to_string() } else { s })
            .collect();
        ok &= mask_text(text, &got, d.topic) == oracle;
    }

    let alphabet: Vec<char> = "abmsMASK #-_,.".chars().collect();
    let mut k = TopicKeywordSet::default();
    k.topics.insert(Topic::Women, ["a", "mask", "ab"].map(String::from).into());
    let mut idempotent = 0;
    for _ in 0..1000 {
        let text: String = (0..rng.random_range(0..30)).map(|_| *alphabet.choose(&mut rng).unwrap()).collect();
        let once = mask_text(&text, &k, Topic::Women);
        idempotent += usize::from(mask_text(&once, &k, Topic::Women) == once);
    }
    ok &= idempotent == 1000;

    verdict(3, "masking", ok, t.elapsed(), minutes(1), &format!("200 documents, idempotent on {idempotent}/1000"));
}

#[derive(serde::Deserialize)]
struct Fixture {
    pairs: Vec<FixturePair>,
    corpus_bleu: f64,
    mean_rouge_l: f64,
}

#[derive(serde::Deserialize)]
struct FixturePair {
    hypothesis: String,
    reference: String,
    rouge_l: f64,
}

#[test]
fn criterion_4_metrics() {
    let t = Instant::now();
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let same = s(&["the cat sat on the mat", "we all stand together today"]);
    let mut ok = corpus_bleu(&same, &same).unwrap() == 100.0
        && corpus_bleu(&s(&["one two three four"]), &s(&["five six seven eight"])).unwrap() == 0.0
        && rouge_l("the cat sat", "the cat sat") == 1.0
        && rouge_l("alpha beta", "gamma delta") == 0.0;

    let f: Fixture = serde_json::from_str(include_str!("fixtures/metric_oracle.json")).unwrap();
    let hyps: Vec<String> = f.pairs.iter().map(|p| p.hypothesis.clone()).collect();
    let refs: Vec<String> = f.pairs.iter().map(|p| p.reference.clone()).collect();
    let bleu = corpus_bleu(&hyps, &refs).unwrap();
    ok &= (bleu - f.corpus_bleu).abs() < 1e-4;
    ok &= (mean_rouge_l(&hyps, &refs).unwrap() - f.mean_rouge_l).abs() < 1e-4;
    ok &= f.pairs.iter().all(|p| (rouge_l(&p.hypothesis, &p.reference) - p.rouge_l).abs() < 1e-4);

    let examples = annotated_examples(&feature_corpus(20, 2, 3));
    let cfg = GenerationConfig { model: Seq2SeqSpec::tiny(), max_source_len: 96, max_target_len: 32, ..Default::default() };
    let g = Generator::new(cfg, Generator::build_vocab(&examples)).unwrap();
    for name in ["lm_head.weight", "lm_head.bias"] {
        let var = g.store().get(name).unwrap();
        var.set(&var.as_tensor().zeros_like().unwrap()).unwrap();
    }
    let ppl = perplexity(&g, &g.batches(&examples).unwrap()).unwrap();
    let v = g.vocab().len() as f64;
    ok &= (ppl - v).abs() / v < 0.02;

    verdict(4, "metrics", ok, t.elapsed(), minutes(2), &format!("BLEU {bleu:.4} vs {:.4}, uniform PPL {ppl:.2} vs V={v}", f.corpus_bleu));
}

#[test]
fn criterion_5_data_prep_counts() {
    let t = Instant::now();
    let tax = ValueTaxonomy::toy();
    let mut ok = true;
    for seed in 0..20 {
        let set = sample_quadruples(&tax, &QuadrupleConfig { total: Some(120), ..Default::default() }, seed).unwrap();
        for q in set.all() {
            ok &= q.anchor != q.positive && tax.descriptor_l1(q.anchor) == tax.descriptor_l1(q.positive);
            ok &= tax.descriptor_l2(q.easy_negative) != tax.descriptor_l2(q.anchor);
            ok &= if q.hard_is_easy {
                tax.descriptor_l2(q.hard_negative) != tax.descriptor_l2(q.anchor)
            } else {
                tax.descriptor_l2(q.hard_negative) == tax.descriptor_l2(q.anchor)
                    && tax.descriptor_l1(q.hard_negative) != tax.descriptor_l1(q.anchor)
            };
        }
        let args = value_arguments(&tax, 30, true, seed);
        let gold: BTreeMap<&str, BTreeSet<usize>> = args.iter().map(|a| (a.text.as_str(), tax.resolve_l2(&a.l2_labels).unwrap())).collect();
        for p in build_entailment_pairs(&args, &tax, &EntailmentPairConfig { negative_ratio: 1.0, seed }).unwrap() {
            ok &= gold[p.argument.as_str()].contains(&tax.descriptor_l2(p.descriptor)) == p.label;
        }
        for p in build_similarity_pairs(&args, &tax, seed).unwrap() {
            ok &= gold[p.argument.as_str()].contains(&tax.descriptor_l2(p.descriptor)) == p.label;
        }
    }
    let full = sample_quadruples(&tax, &QuadrupleConfig::default(), 0).unwrap();
    ok &= full.len() == 702 && full.train.len() == 632;

    let detail = match std::env::var_os("COUNTERARG_SEMEVAL_DIR").map(PathBuf::from) {
        Some(dir) => {
            let stax = load_taxonomy(&dir.join("taxonomy.json")).unwrap();
            let read = |split: &str| load_labeled_arguments(&dir.join(format!("arguments-{split}.tsv"))).unwrap();
            let train = merge_training_splits(read("training"), Some(read("validation-zhihu")), true);
            let val = read("validation");
            let e = EntailmentPairConfig::default();
            let counts = (
                build_entailment_pairs(&train, &stax, &e).unwrap().len(),
                build_entailment_pairs(&val, &stax, &e).unwrap().len(),
                build_similarity_pairs(&train, &stax, 0).unwrap().len(),
                build_similarity_pairs(&val, &stax, 0).unwrap().len(),
                sample_quadruples(&stax, &QuadrupleConfig::default(), 0).unwrap().len(),
            );
            ok &= counts == (189_312, 65_900, 200_059, 69_607, 702);
            format!("toy invariants hold; shared-task counts {counts:?}")
        }
        None => "toy invariants hold; shared-task counts not checked, COUNTERARG_SEMEVAL_DIR unset".to_string(),
    };
    verdict(5, "data-prep counts", ok, t.elapsed(), minutes(5), &detail);
}

#[test]
fn criterion_6_toy_generation() {
    let t = Instant::now();
    let examples = annotated_examples(&template_corpus(300, 1));
    let (train, val) = split_examples(&examples, 0.2, 0);
    let cfg = |families: &[FeatureFamily]| GenerationConfig {
        families: families.iter().copied().collect(),
        max_source_len: 32,
        max_target_len: 16,
        beam_width: 5,
        model: Seq2SeqSpec::tiny(),
        train: TrainConfig { seed: 0, ..train_cfg(300) },
        ..Default::default()
    };
    let accuracy = |g: &Generator, with_codes: bool| {
        let hits = val
            .iter()
            .filter(|e| {
                let code = *e.response_features.iter().next().unwrap();
                let desired: FeatureSet = if with_codes { [code].into() } else { FeatureSet::new() };
                let out = g.generate(&e.context, &e.query, &desired, &e.query_features).unwrap();
                out.response == template_for(code).unwrap()
            })
            .count();
        hits as f64 / val.len() as f64
    };
    let coded = train_generator(&train, &val, &cfg(&[FeatureFamily::ArgType])).unwrap();
    let baseline = train_generator(&train, &val, &cfg(&[])).unwrap();
    let with = accuracy(&coded, true);
    let without = accuracy(&baseline, false);
    let ppl_coded = perplexity(&coded, &coded.batches(&val).unwrap()).unwrap();
    let ppl_base = perplexity(&baseline, &baseline.batches(&val).unwrap()).unwrap();
    let ok = with >= 0.9 && without <= 0.3 && ppl_coded <= ppl_base;
    verdict(
        6,
        "toy generation",
        ok,
        t.elapsed(),
        minutes(10),
        &format!("accuracy {with:.3} with codes, {without:.3} without; PPL {ppl_coded:.3} vs baseline {ppl_base:.3}"),
    );
}

#[test]
fn criterion_7_toy_detectors() {
    let t = Instant::now();
    let tax = ValueTaxonomy::toy();
    let train = value_arguments(&tax, 160, false, 1);
    let val = value_arguments(&tax, 40, false, 2);
    let test = value_arguments(&tax, 60, false, 3);
    let texts: Vec<String> = test.iter().map(|a| a.text.clone()).collect();
    let gold: Vec<Vec<bool>> = test.iter().map(|a| tax.l2_names().map(|n| a.l2_labels.iter().any(|l| l == n)).collect()).collect();
    let score = |preds: &[ValuePrediction]| {
        let p: Vec<Vec<bool>> = preds.iter().map(|p| tax.l2_names().map(|n| p.l2[n].decision == 1).collect()).collect();
        macro_f1(&p, &gold)
    };

    let classifier = train_classification_model(&tax, &train, &val, &ClassificationConfig { train: train_cfg(300), ..Default::default() }).unwrap();
    let f_cls = score(&classifier.predict(&texts).unwrap());

    let ecfg = EntailmentPairConfig { negative_ratio: 1.0, seed: 0 };
    let entail = train_entailment_model(
        &tax,
        &build_entailment_pairs(&train, &tax, &ecfg).unwrap(),
        &build_entailment_pairs(&val, &tax, &ecfg).unwrap(),
        &EntailmentConfig { train: train_cfg(300), ..Default::default() },
    )
    .unwrap();
    let f_ent = score(&entail.predict(&texts).unwrap());

    let quads = sample_quadruples(&tax, &QuadrupleConfig::default(), 0).unwrap();
    let vocab = Vocab::build(train.iter().map(|a| a.text.as_str()).chain((0..tax.descriptor_count()).map(|d| tax.descriptor(d))), 1);
    let (desc, cents) = train_descriptor_embedder(&tax, &quads, vocab, &EmbedderConfig { train: train_cfg(300), ..Default::default() }).unwrap();
    let space = train_argument_embedder(
        &tax,
        &build_similarity_pairs(&train, &tax, 0).unwrap(),
        &build_similarity_pairs(&val, &tax, 0).unwrap(),
        &desc,
        &cents,
        &ArgumentEmbedderConfig { train: train_cfg(300), ..Default::default() },
    )
    .unwrap();
    let f_sim = score(&space.predict(&texts).unwrap());

    let at_train = argtype_pairs(240, 1);
    let at_val = argtype_pairs(40, 2);
    let at_test = argtype_pairs(80, 3);
    let variant = ArgTypeVariant { name: "plain".into(), masked: false, encoder: EncoderSpec::tiny() };
    let model = train_argtype_model(&at_train, &at_val, &variant, &ArgTypeConfig { train: train_cfg(300), ..Default::default() }, None).unwrap();
    let queries: Vec<_> = at_test.iter().map(|p| (p.hate.clone(), p.counter.clone(), p.topic)).collect();
    let pred: Vec<Vec<bool>> = model.predict(&queries).unwrap().iter().map(|l| l.decisions.to_vec()).collect();
    let at_gold: Vec<Vec<bool>> = at_test.iter().map(|p| p.label_vector().unwrap().to_vec()).collect();
    let f_arg = macro_f1(&pred, &at_gold);

    let ok = [f_cls, f_ent, f_sim, f_arg].iter().all(|&f| f >= 0.9);
    verdict(
        7,
        "toy detectors",
        ok,
        t.elapsed(),
        minutes(5),
        &format!("macro-F1 classification {f_cls:.3}, entailment {f_ent:.3}, similarity {f_sim:.3}, argtype {f_arg:.3}"),
    );
}

#[test]
fn criterion_8_grid_integrity() {
    let t = Instant::now();
    let corpus = feature_corpus(40, 2, 1);
    let cfg = GridConfig {
        generation: GenerationConfig {
            max_source_len: 96,
            max_target_len: 32,
            beam_width: 2,
            model: Seq2SeqSpec::tiny(),
            train: TrainConfig { seed: 0, ..train_cfg(20) },
            ..Default::default()
        },
        validation_fraction: 0.1,
        test_fraction: 0.15,
        split_seed: 0,
        max_eval_examples: Some(10),
        workers: 1,
    };
    let full = run_feature_grid(&corpus, &feature_grid(), &cfg, None).unwrap();
    let digests: BTreeSet<&str> = full.iter().map(|r| r.split_digest.as_str()).collect();
    let seeds: BTreeSet<u64> = full.iter().map(|r| r.seed).collect();
    let mut ok = full.len() == 16 && digests.len() == 1 && seeds.len() == 1 && full.iter().all(|r| r.error.is_none());

    let rows = select_rows("4,13").unwrap();
    let again = run_feature_grid(&corpus, &rows, &cfg, None).unwrap();
    for r in &again {
        let first = full.iter().find(|f| f.id == r.id).unwrap();
        ok &= r.bleu.to_bits() == first.bleu.to_bits() && r.rouge_l.to_bits() == first.rouge_l.to_bits();
    }
    verdict(8, "grid integrity", ok, t.elapsed(), minutes(10), &format!("{} rows, {} split digest(s), rerun of rows 4 and 13", full.len(), digests.len()));
}
