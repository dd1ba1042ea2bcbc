use std::collections::BTreeSet;
use std::sync::OnceLock;

use counterarg_core::features::{ControlCode, FeatureFamily, FeatureSet};
use counterarg_core::generator::*;
use counterarg_core::nn::{TrainConfig, Vocab, BOS, EOS};
use counterarg_core::synthetic::template_corpus;
use counterarg_core::Error;
use proptest::prelude::*;

fn code_set() -> impl Strategy<Value = FeatureSet> {
    prop::collection::btree_set(prop::sample::select(ControlCode::ALL.to_vec()), 0..8)
}

fn families() -> impl Strategy<Value = BTreeSet<FeatureFamily>> {
    prop::collection::btree_set(prop::sample::select(FeatureFamily::ALL.to_vec()), 0..5)
}

fn words() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 1..7).prop_map(|w| w.join(" "))
}

fn vocab() -> Vocab {
    let mut v = Vocab::build(["a b c d e"], 1);
    v.extend(&[HATE_MARKER, COUNTER_MARKER]);
    v.extend(&ControlCode::ALL.iter().map(|c| c.token()).collect::<Vec<_>>());
    v
}

fn only(codes: &FeatureSet, fams: &BTreeSet<FeatureFamily>) -> FeatureSet {
    codes.iter().filter(|c| fams.contains(&c.family())).copied().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn delta_partitions_the_union(q in code_set(), r in code_set()) {
        let p = feature_delta(&q, &r);
        let enc: FeatureSet = q.iter().filter(|c| !r.contains(c)).copied().collect();
        let dec: FeatureSet = r.iter().filter(|c| !q.contains(c)).copied().collect();
        let both: FeatureSet = q.iter().filter(|c| r.contains(c)).copied().collect();
        prop_assert_eq!(&p.encoder_codes, &enc);
        prop_assert_eq!(&p.decoder_codes, &dec);
        prop_assert!(enc.is_disjoint(&dec) && enc.is_disjoint(&both) && dec.is_disjoint(&both));
        let union: FeatureSet = enc.iter().chain(&dec).chain(&both).copied().collect();
        prop_assert_eq!(union, q.union(&r).copied().collect::<FeatureSet>());
    }

    #[test]
    fn placement_filters_before_the_delta(q in code_set(), r in code_set(), fams in families()) {
        let ex = AnnotatedExample {
            dialogue_id: "d".into(),
            turn_index: 0,
            context: vec![],
            query: "a".into(),
            response: "b".into(),
            query_features: q.clone(),
            response_features: r.clone(),
        };
        let p = ex.placement(&fams);
        prop_assert_eq!(p, feature_delta(&only(&q, &fams), &only(&r, &fams)));
    }

    #[test]
    fn sequence_lengths_add_up(
        context in prop::collection::vec((words(), words()), 0..4),
        query in words(),
        response in words(),
        q in code_set(),
        r in code_set(),
        fams in families(),
        max_source_len in 20usize..40,
        max_target_len in 12usize..20,
    ) {
        let v = vocab();
        let layout = Layout { vocab: &v, max_source_len, max_target_len, context_turns: None, code_position: CodePosition::BeforeBos };
        let ex = AnnotatedExample { dialogue_id: "d".into(), turn_index: context.len(), context, query, response, query_features: q, response_features: r };
        let p = ex.placement(&fams);
        let b = build_training_batch(&ex, &p, &fams, &layout).unwrap();
        let enc_codes = p.encoder_codes.len();
        let dec_codes = p.decoder_codes.len();

        prop_assert!(b.encoder_ids.len() <= max_source_len);
        prop_assert!(b.decoder_input_ids.len() <= max_target_len);
        prop_assert_eq!(b.target_ids.len(), b.decoder_input_ids.len());
        prop_assert_eq!(b.target_mask.len(), b.target_ids.len());
        prop_assert_eq!(&b.target_ids[..b.target_ids.len() - 1], &b.decoder_input_ids[1..]);
        prop_assert_eq!(*b.target_ids.last().unwrap(), v.special(EOS));

        let is_code = |id: &u32| v.token(*id).starts_with('<') && v.token(*id).contains(':');
        prop_assert_eq!(b.encoder_ids.iter().take_while(|i| is_code(i)).count(), enc_codes);
        prop_assert_eq!(b.encoder_ids.iter().filter(|i| is_code(i)).count(), enc_codes);
        prop_assert_eq!(b.decoder_input_ids.iter().filter(|i| is_code(i)).count(), dec_codes);
        prop_assert_eq!(b.decoder_input_ids[dec_codes], v.special(BOS));
        let masked = b.target_mask.iter().filter(|&&m| m == 0.0).count();
        prop_assert_eq!(masked, dec_codes);
        prop_assert!(b.target_mask[..dec_codes].iter().all(|&m| m == 0.0));
        let response_tokens = v.encode(&ex.response).len().min(max_target_len - dec_codes - 1);
        prop_assert_eq!(b.decoder_input_ids.len(), dec_codes + 1 + response_tokens);
    }
}

#[test]
fn empty_context_and_no_codes_is_the_plain_format() {
    let v = vocab();
    let layout = Layout { vocab: &v, max_source_len: 32, max_target_len: 16, context_turns: None, code_position: CodePosition::BeforeBos };
    let ex = AnnotatedExample {
        dialogue_id: "d".into(),
        turn_index: 0,
        context: vec![],
        query: "a b c".into(),
        response: "d e".into(),
        query_features: [ControlCode::Openness].into(),
        response_features: [ControlCode::Facts].into(),
    };
    let none = BTreeSet::new();
    let b = build_training_batch(&ex, &ex.placement(&none), &none, &layout).unwrap();
    let mut enc = vec![v.special(HATE_MARKER)];
    enc.extend(v.encode("a b c"));
    let mut dec = vec![v.special(BOS)];
    dec.extend(v.encode("d e"));
    assert_eq!(b.encoder_ids, enc);
    assert_eq!(b.decoder_input_ids, dec);
    assert!(b.target_mask.iter().all(|&m| m == 1.0));
}

fn config(families: &[FeatureFamily], steps: usize) -> GenerationConfig {
    GenerationConfig {
        families: families.iter().copied().collect(),
        max_source_len: 32,
        max_target_len: 16,
        beam_width: 3,
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
    }
}

fn data() -> (Vec<AnnotatedExample>, Vec<AnnotatedExample>) {
    split_examples(&annotated_examples(&template_corpus(80, 5)), 0.2, 0)
}

fn argtype_generator() -> &'static Generator {
    static G: OnceLock<Generator> = OnceLock::new();
    G.get_or_init(|| {
        let (train, val) = data();
        train_generator(&train, &val, &config(&[FeatureFamily::ArgType], 40)).unwrap()
    })
}

#[test]
fn outputs_never_contain_code_tokens() {
    let g = argtype_generator();
    let (_, val) = data();
    for e in val.iter().take(6) {
        for code in FeatureFamily::ArgType.codes() {
            let r = g.generate(&e.context, &e.query, &[code].into(), &e.query_features).unwrap();
            assert!(!r.response.contains('<'), "{}", r.response);
            for c in ControlCode::ALL {
                assert!(!r.response.contains(&c.token()));
            }
        }
    }
}

#[test]
fn decoding_is_deterministic_and_width_one_is_greedy() {
    let g = argtype_generator();
    let (_, val) = data();
    for e in val.iter().take(5) {
        let desired: FeatureSet = e.response_features.clone();
        let a = g.generate(&e.context, &e.query, &desired, &e.query_features).unwrap();
        let b = g.generate(&e.context, &e.query, &desired, &e.query_features).unwrap();
        assert_eq!(a, b);
        let w1 = g.generate_with_width(&e.context, &e.query, &desired, &e.query_features, 1).unwrap();
        let greedy = g.generate_greedy(&e.context, &e.query, &desired, &e.query_features).unwrap();
        assert_eq!(w1.response, greedy);
    }
}

#[test]
fn checkpoint_reproduces_validation_loss() {
    let g = argtype_generator();
    let (_, val) = data();
    let dir = tempfile::tempdir().unwrap();
    g.save(dir.path()).unwrap();
    let loaded = Generator::load(dir.path()).unwrap();
    let logged = g.train_log().unwrap().last_val_loss().unwrap();
    let again = loaded.mean_loss(&loaded.batches(&val).unwrap()).unwrap();
    assert!((again - logged).abs() < 1e-5, "{again} vs {logged}");
    assert_eq!(loaded.code_ids(), g.code_ids());
    let e = &val[0];
    let desired: FeatureSet = [ControlCode::Question].into();
    assert_eq!(
        loaded.generate(&e.context, &e.query, &desired, &e.query_features).unwrap(),
        g.generate(&e.context, &e.query, &desired, &e.query_features).unwrap()
    );
}

#[test]
fn codes_outside_the_trained_families_are_rejected() {
    let g = argtype_generator();
    let err = g.generate(&[], "a", &[ControlCode::Openness].into(), &FeatureSet::new()).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn baseline_trains_and_decreases_validation_loss() {
    let (train, val) = data();
    let g = train_generator(&train, &val, &config(&[], 12)).unwrap();
    assert!(g.code_ids().is_empty());
    let losses: Vec<f64> = g.train_log().unwrap().epochs.iter().map(|e| e.val_loss).collect();
    assert!(losses.len() >= 3, "{losses:?}");
    assert!(losses[0] > losses[1] && losses[1] > losses[2], "{losses:?}");
    let e = &val[0];
    let r = g.generate(&e.context, &e.query, &FeatureSet::new(), &FeatureSet::new()).unwrap();
    assert!(!r.beam_scores.is_empty());
    for b in g.batches(&val).unwrap() {
        assert!(b.target_mask.iter().all(|&m| m == 1.0));
    }
}
