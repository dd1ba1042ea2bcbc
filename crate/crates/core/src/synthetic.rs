//! Seeded synthetic data with planted signals, used by the toy runs, the
//! smoke tests and the benchmarks.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;

use crate::annotator::{AnnotatedCorpus, AnnotatedDialogue, AnnotatedTurn};
use crate::argtype_detector::{ArgType, LabeledPair};
use crate::corpus::{Dialogue, DialogueCorpus, Topic};
use crate::features::{ControlCode, FeatureFamily, FeatureSet};
use crate::rng::seeded;
use crate::taxonomy::{LabeledArgument, ValueTaxonomy};

const FILLER: [&str; 16] = [
    "people", "should", "really", "think", "about", "this", "today", "because", "many", "we",
    "all", "know", "that", "it", "is", "important",
];

/// Words of the descriptors under each L2 category of `taxonomy`.
fn l2_signal_words(taxonomy: &ValueTaxonomy) -> Vec<Vec<String>> {
    (0..taxonomy.l2_count())
        .map(|c| {
            let mut words: Vec<String> = taxonomy
                .descriptors_of_l2(c)
                .into_iter()
                .flat_map(|d| crate::text::tokenize(taxonomy.descriptor(d)))
                .filter(|w| w.len() > 3)
                .collect();
            words.sort();
            words.dedup();
            words
        })
        .collect()
}

/// Arguments whose gold categories are planted as descriptor words among
/// neutral filler. With `multi_label` each category is drawn independently
/// (possibly none); otherwise each argument has exactly one category.
pub fn value_arguments(taxonomy: &ValueTaxonomy, n: usize, multi_label: bool, seed: u64) -> Vec<LabeledArgument> {
    let signals = l2_signal_words(taxonomy);
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| {
            let chosen: Vec<usize> = if multi_label {
                (0..taxonomy.l2_count()).filter(|_| rng.random_bool(0.5)).collect()
            } else {
                vec![rng.random_range(0..taxonomy.l2_count())]
            };
            let mut words: Vec<String> = (0..rng.random_range(3..7))
                .map(|_| FILLER.choose(&mut rng).unwrap().to_string())
                .collect();
            for &c in &chosen {
                for _ in 0..rng.random_range(1..3) {
                    words.push(signals[c].choose(&mut rng).unwrap().clone());
                }
            }
            words.shuffle(&mut rng);
            LabeledArgument {
                text: words.join(" "),
                l2_labels: chosen.iter().map(|&c| taxonomy.l2_name(c).to_string()).collect(),
                l1_labels: None,
            }
        })
        .collect()
}

const TOPIC_WORDS: [(Topic, &str); 6] = [
    (Topic::Lgbt, "gays"),
    (Topic::Migrants, "migrants"),
    (Topic::Muslims, "muslims"),
    (Topic::Jews, "jews"),
    (Topic::PeopleOfColor, "blacks"),
    (Topic::Women, "women"),
];

const HATE_FILLER: [&str; 8] = ["are", "ruining", "everything", "they", "should", "leave", "never", "trust"];

/// Cue words planted in the counter text for each argument type.
pub fn argtype_cues(t: ArgType) -> [&'static str; 3] {
    match t {
        ArgType::Denouncing => ["shameful", "unacceptable", "disgusting"],
        ArgType::Facts => ["statistics", "studies", "percent"],
        ArgType::Humor => ["joke", "funny", "laugh"],
        ArgType::Hypocrisy => ["hypocrite", "yourself", "double"],
        ArgType::Positive => ["wonderful", "together", "kindness"],
        ArgType::Question => ["why", "how", "really?"],
    }
}

/// Hate/counter pairs with each type's cue words planted in the counter.
/// Every pair has one to three types; both texts mention the topic word.
pub fn argtype_pairs(n: usize, seed: u64) -> Vec<LabeledPair> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| {
            let (topic, word) = *TOPIC_WORDS.choose(&mut rng).unwrap();
            let k = rng.random_range(1..4);
            let mut types: Vec<ArgType> = ArgType::ALL.choose_multiple(&mut rng, k).copied().collect();
            types.sort();
            let mut hate: Vec<&str> = (0..rng.random_range(3..6)).map(|_| *HATE_FILLER.choose(&mut rng).unwrap()).collect();
            hate.push(word);
            hate.shuffle(&mut rng);
            let mut counter: Vec<&str> = (0..rng.random_range(2..5)).map(|_| *FILLER.choose(&mut rng).unwrap()).collect();
            counter.push(word);
            for t in &types {
                counter.push(argtype_cues(*t).choose(&mut rng).unwrap());
            }
            counter.shuffle(&mut rng);
            LabeledPair {
                hate: hate.join(" "),
                counter: counter.join(" "),
                labels: types.iter().map(|t| t.name().to_string()).collect(),
                topic: Some(topic),
            }
        })
        .collect()
}

/// Response template selected by each argType code.
pub fn template_for(code: ControlCode) -> Option<&'static str> {
    Some(match code {
        ControlCode::Denouncing => "spreading hate like this is shameful and unacceptable",
        ControlCode::Facts => "the statistics clearly show that this claim is false",
        ControlCode::Hypocrisy => "you demand respect from others but never give it yourself",
        ControlCode::Positive => "our communities grow stronger when we stand together",
        ControlCode::Question => "why do you believe that and where is your evidence",
        _ => return None,
    })
}

fn hate_text(rng: &mut crate::rng::Rng) -> String {
    let (_, word) = *TOPIC_WORDS.choose(rng).unwrap();
    let mut words: Vec<&str> = (0..rng.random_range(3..6)).map(|_| *HATE_FILLER.choose(rng).unwrap()).collect();
    words.push(word);
    words.shuffle(rng);
    words.join(" ")
}

/// Single-turn dialogues whose counter text is the template of one
/// argType code; codes take turns so that each template is equally
/// frequent. Hate sides carry no features.
pub fn template_corpus(n: usize, seed: u64) -> AnnotatedCorpus {
    let mut rng = seeded(seed);
    let codes: Vec<ControlCode> = FeatureFamily::ArgType.codes().collect();
    let dialogues = (0..n)
        .map(|i| {
            let code = codes[i % codes.len()];
            AnnotatedDialogue {
                dialogue_id: format!("tpl-{i}"),
                topic: TOPIC_WORDS.choose(&mut rng).unwrap().0,
                turns: vec![AnnotatedTurn {
                    hate_text: hate_text(&mut rng),
                    counter_text: template_for(code).unwrap().to_string(),
                    hate_features: FeatureSet::new(),
                    counter_features: [code].into(),
                    error: None,
                }],
            }
        })
        .collect();
    AnnotatedCorpus {
        dialogues,
        run: Default::default(),
    }
}

/// Short phrase realizing a control code in text.
pub fn code_phrase(code: ControlCode) -> &'static str {
    use ControlCode::*;
    match code {
        Agreeableness => "with kind respect",
        Conscientiousness => "following the rules",
        Extraversion => "with all our friends",
        Neuroticism => "in constant fear",
        Openness => "open to new ideas",
        Achievement => "through hard work",
        BenevolenceCaring => "caring for family",
        SecurityPersonal => "keeping people safe",
        SecuritySocietal => "for social order",
        SelfDirectionAction => "free to choose",
        UniversalismConcern => "equal for everyone",
        FromConsequence => "this leads to harm",
        FromSourceAuthorityKnowledge => "experts report that",
        GoalMeans => "the way forward is",
        RuleOrPrinciple => "as a matter of principle",
        Denouncing => "that is shameful",
        Facts => "the data shows",
        Hypocrisy => "look at yourself",
        Positive => "we stand together",
        Question => "why do you think so",
    }
}

fn side_codes(rng: &mut crate::rng::Rng, with_argtype: bool) -> FeatureSet {
    let mut out = FeatureSet::new();
    for family in FeatureFamily::ALL {
        let codes: Vec<ControlCode> = family.codes().collect();
        match family {
            FeatureFamily::ArgType if !with_argtype => {}
            FeatureFamily::HumVal => {
                if rng.random_bool(0.5) {
                    out.insert(*codes.choose(rng).unwrap());
                }
            }
            _ => {
                out.insert(*codes.choose(rng).unwrap());
            }
        }
    }
    out
}

fn realize(codes: &FeatureSet) -> String {
    codes.iter().map(|&c| code_phrase(c)).collect::<Vec<_>>().join(" ")
}

/// Dialogues annotated with all four families, each side's text built from
/// the phrases of its codes. Hate sides carry no argType codes.
pub fn feature_corpus(n_dialogues: usize, turns: usize, seed: u64) -> AnnotatedCorpus {
    let mut rng = seeded(seed);
    let dialogues = (0..n_dialogues)
        .map(|i| AnnotatedDialogue {
            dialogue_id: format!("feat-{i}"),
            topic: TOPIC_WORDS.choose(&mut rng).unwrap().0,
            turns: (0..turns)
                .map(|_| {
                    let hate_features = side_codes(&mut rng, false);
                    let counter_features = side_codes(&mut rng, true);
                    AnnotatedTurn {
                        hate_text: format!("{} {}", hate_text(&mut rng), realize(&hate_features)),
                        counter_text: realize(&counter_features),
                        hate_features,
                        counter_features,
                        error: None,
                    }
                })
                .collect(),
        })
        .collect();
    AnnotatedCorpus {
        dialogues,
        run: Default::default(),
    }
}

/// Raw dialogues with planted cue words, for annotation smoke runs.
pub fn dialogue_corpus(n_dialogues: usize, turns: usize, seed: u64) -> DialogueCorpus {
    let annotated = feature_corpus(n_dialogues, turns, seed);
    DialogueCorpus::new(
        annotated
            .dialogues
            .iter()
            .map(|d| {
                Dialogue::from_pairs(
                    d.dialogue_id.clone(),
                    d.topic,
                    d.turns.iter().map(|t| (t.hate_text.as_str(), t.counter_text.as_str())),
                )
                .expect("synthetic turns are non-empty")
            })
            .collect(),
    )
}
