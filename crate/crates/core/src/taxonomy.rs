//! The human-values hierarchy (descriptor -> L1 value -> L2 category -> L3
//! aspect) and the training-set builders for the three value detectors.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, derived, seeded};

/// The six value categories carried through to annotation and generation.
pub const TOP_VALUE_CATEGORIES: [&str; 6] = [
    "Achievement",
    "Benevolence: caring",
    "Security: personal",
    "Security: societal",
    "Self-direction: action",
    "Universalism: concern",
];

pub const OFFICIAL_L3_COUNT: usize = 4;
pub const OFFICIAL_L2_COUNT: usize = 20;
pub const OFFICIAL_DESCRIPTOR_COUNT: usize = 218;

/// Cardinality check applied when loading a taxonomy file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaxonomyShape {
    /// Exactly 4 L3, 20 L2 and 218 descriptors.
    Official,
    /// Structural checks only; used for toy and custom taxonomies.
    Any,
}

#[derive(Serialize, Deserialize)]
struct TaxonomyFile {
    l3: Vec<String>,
    l2: BTreeMap<String, String>,
    l1: BTreeMap<String, String>,
    descriptors: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValueTaxonomy {
    l3: Vec<String>,
    /// (name, L3 index)
    l2: Vec<(String, usize)>,
    /// (name, L2 index)
    l1: Vec<(String, usize)>,
    /// (sentence, L1 index)
    descriptors: Vec<(String, usize)>,
}

pub fn load_taxonomy(path: &Path) -> Result<ValueTaxonomy> {
    ValueTaxonomy::load(path, TaxonomyShape::Official)
}

impl ValueTaxonomy {
    pub fn load(path: &Path, shape: TaxonomyShape) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw, shape)
    }

    pub fn from_json(raw: &str, shape: TaxonomyShape) -> Result<Self> {
        let file: TaxonomyFile = serde_json::from_str(raw)?;
        Self::from_file(file, shape)
    }

    /// The bundled 2-L2 / 4-L1 / 8-descriptor taxonomy used by the toy runs.
    pub fn toy() -> Self {
        Self::from_json(include_str!("../data/toy_taxonomy.json"), TaxonomyShape::Any)
            .expect("bundled toy taxonomy is valid")
    }

    fn from_file(file: TaxonomyFile, shape: TaxonomyShape) -> Result<Self> {
        let l3 = file.l3;
        let l3_index: BTreeMap<&str, usize> =
            l3.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        if l3_index.len() != l3.len() {
            return Err(taxonomy_err("duplicate L3 names", Vec::new()));
        }

        let mut l2 = Vec::with_capacity(file.l2.len());
        let mut bad = Vec::new();
        for (name, parent) in &file.l2 {
            match l3_index.get(parent.as_str()) {
                Some(&p) => l2.push((name.clone(), p)),
                None => bad.push(format!("{name} -> {parent}")),
            }
        }
        if !bad.is_empty() {
            return Err(taxonomy_err("L2 categories with unknown L3 parent", bad));
        }
        let l2_index: BTreeMap<&str, usize> =
            l2.iter().enumerate().map(|(i, (n, _))| (n.as_str(), i)).collect();

        let mut l1 = Vec::with_capacity(file.l1.len());
        for (name, parent) in &file.l1 {
            match l2_index.get(parent.as_str()) {
                Some(&p) => l1.push((name.clone(), p)),
                None => bad.push(format!("{name} -> {parent}")),
            }
        }
        if !bad.is_empty() {
            return Err(taxonomy_err("L1 values with unknown L2 parent", bad));
        }
        let l1_index: BTreeMap<&str, usize> =
            l1.iter().enumerate().map(|(i, (n, _))| (n.as_str(), i)).collect();

        let mut descriptors = Vec::with_capacity(file.descriptors.len());
        for (sentence, parent) in &file.descriptors {
            match l1_index.get(parent.as_str()) {
                Some(&p) => descriptors.push((sentence.clone(), p)),
                None => bad.push(format!("{sentence} -> {parent}")),
            }
        }
        if !bad.is_empty() {
            return Err(taxonomy_err("descriptors with unknown L1 parent", bad));
        }

        let taxonomy = ValueTaxonomy {
            l3,
            l2,
            l1,
            descriptors,
        };
        taxonomy.validate(shape)?;
        Ok(taxonomy)
    }

    fn validate(&self, shape: TaxonomyShape) -> Result<()> {
        let covered: BTreeSet<usize> = (0..self.descriptor_count())
            .map(|d| self.descriptor_l2(d))
            .collect();
        let orphans: Vec<String> = (0..self.l2.len())
            .filter(|i| !covered.contains(i))
            .map(|i| self.l2[i].0.clone())
            .collect();
        if !orphans.is_empty() {
            return Err(taxonomy_err("L2 categories without any descriptor", orphans));
        }
        if shape == TaxonomyShape::Official {
            let mut problems = Vec::new();
            if self.l3.len() != OFFICIAL_L3_COUNT {
                problems.push(format!("{} L3 (expected {OFFICIAL_L3_COUNT})", self.l3.len()));
            }
            if self.l2.len() != OFFICIAL_L2_COUNT {
                problems.push(format!("{} L2 (expected {OFFICIAL_L2_COUNT})", self.l2.len()));
            }
            if self.descriptors.len() != OFFICIAL_DESCRIPTOR_COUNT {
                problems.push(format!(
                    "{} descriptors (expected {OFFICIAL_DESCRIPTOR_COUNT})",
                    self.descriptors.len()
                ));
            }
            if !problems.is_empty() {
                return Err(taxonomy_err("cardinality violation", problems));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = TaxonomyFile {
            l3: self.l3.clone(),
            l2: self.l2.iter().map(|(n, p)| (n.clone(), self.l3[*p].clone())).collect(),
            l1: self.l1.iter().map(|(n, p)| (n.clone(), self.l2[*p].0.clone())).collect(),
            descriptors: self
                .descriptors
                .iter()
                .map(|(s, p)| (s.clone(), self.l1[*p].0.clone()))
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Stable content hash, recorded in checkpoint metadata.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = self.to_json().unwrap_or_default();
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn l3_names(&self) -> impl Iterator<Item = &str> {
        self.l3.iter().map(String::as_str)
    }

    pub fn l2_names(&self) -> impl Iterator<Item = &str> {
        self.l2.iter().map(|(n, _)| n.as_str())
    }

    pub fn l1_names(&self) -> impl Iterator<Item = &str> {
        self.l1.iter().map(|(n, _)| n.as_str())
    }

    pub fn l3_count(&self) -> usize {
        self.l3.len()
    }

    pub fn l2_count(&self) -> usize {
        self.l2.len()
    }

    pub fn l1_count(&self) -> usize {
        self.l1.len()
    }

    pub fn descriptor_count(&self) -> usize {
        self.descriptors.len()
    }

    pub fn descriptor(&self, d: usize) -> &str {
        &self.descriptors[d].0
    }

    pub fn descriptor_l1(&self, d: usize) -> usize {
        self.descriptors[d].1
    }

    pub fn descriptor_l2(&self, d: usize) -> usize {
        self.l1[self.descriptor_l1(d)].1
    }

    pub fn l1_parent(&self, l1: usize) -> usize {
        self.l1[l1].1
    }

    pub fn l2_parent(&self, l2: usize) -> usize {
        self.l2[l2].1
    }

    pub fn l2_name(&self, l2: usize) -> &str {
        &self.l2[l2].0
    }

    pub fn l1_name(&self, l1: usize) -> &str {
        &self.l1[l1].0
    }

    pub fn l2_index(&self, name: &str) -> Option<usize> {
        self.l2.iter().position(|(n, _)| n == name)
    }

    pub fn l1_index(&self, name: &str) -> Option<usize> {
        self.l1.iter().position(|(n, _)| n == name)
    }

    pub fn l1_children(&self, l2: usize) -> Vec<usize> {
        (0..self.l1.len()).filter(|&i| self.l1[i].1 == l2).collect()
    }

    pub fn descriptors_of_l1(&self, l1: usize) -> Vec<usize> {
        (0..self.descriptors.len())
            .filter(|&d| self.descriptors[d].1 == l1)
            .collect()
    }

    pub fn descriptors_of_l2(&self, l2: usize) -> Vec<usize> {
        (0..self.descriptors.len())
            .filter(|&d| self.descriptor_l2(d) == l2)
            .collect()
    }

    /// Resolves L2 names to indices, failing on unknown labels.
    pub fn resolve_l2(&self, labels: &[String]) -> Result<BTreeSet<usize>> {
        labels
            .iter()
            .map(|l| {
                self.l2_index(l)
                    .ok_or_else(|| Error::Schema(format!("unknown L2 label `{l}`")))
            })
            .collect()
    }
}

fn taxonomy_err(message: &str, offending: Vec<String>) -> Error {
    Error::Taxonomy {
        message: message.to_string(),
        offending,
    }
}

/// An argument with gold value categories.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledArgument {
    pub text: String,
    pub l2_labels: Vec<String>,
    /// Finer labels when the source provides them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1_labels: Option<Vec<String>>,
}

/// Reads labeled arguments from JSON Lines, or from a shared-task
/// `arguments-*.tsv` file whose labels sit in the sibling `labels-*.tsv`.
pub fn load_labeled_arguments(path: &Path) -> Result<Vec<LabeledArgument>> {
    if path.extension().is_some_and(|e| e == "tsv") {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let labels = path.with_file_name(name.replacen("arguments", "labels", 1));
        if labels == path {
            return Err(Error::Config(format!(
                "{}: expected an `arguments-*.tsv` file with a `labels-*.tsv` sibling",
                path.display()
            )));
        }
        return load_semeval_arguments(path, &labels);
    }
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)?;
        for field in ["text", "l2_labels"] {
            if value.get(field).is_none() {
                return Err(Error::missing(field, format!("line {}", i + 1)));
            }
        }
        out.push(serde_json::from_value(value)?);
    }
    Ok(out)
}

fn tsv_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let rows = reader
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok((header, rows))
}

fn column(header: &[String], name: &str, path: &Path) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::missing(name, path.display().to_string()))
}

/// Shared-task TSV pair: `Argument ID, Conclusion, Stance, Premise` and
/// `Argument ID` plus one 0/1 column per L2 category. The premise is the
/// argument text.
pub fn load_semeval_arguments(arguments: &Path, labels: &Path) -> Result<Vec<LabeledArgument>> {
    let (a_header, a_rows) = tsv_rows(arguments)?;
    let id_col = column(&a_header, "Argument ID", arguments)?;
    let premise_col = column(&a_header, "Premise", arguments)?;
    let (l_header, l_rows) = tsv_rows(labels)?;
    let label_id_col = column(&l_header, "Argument ID", labels)?;
    let mut by_id: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for row in &l_rows {
        let positives = l_header
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != label_id_col)
            .filter(|(i, _)| row.get(*i).is_some_and(|v| v.trim() == "1"))
            .map(|(_, name)| name.clone())
            .collect();
        by_id.insert(row[label_id_col].as_str(), positives);
    }
    a_rows
        .iter()
        .map(|row| {
            let id = row[id_col].as_str();
            let l2_labels = by_id
                .get(id)
                .cloned()
                .ok_or_else(|| Error::Schema(format!("argument {id} has no row in {}", labels.display())))?;
            Ok(LabeledArgument {
                text: crate::text::normalize_whitespace(&row[premise_col]),
                l2_labels,
                l1_labels: None,
            })
        })
        .collect()
}

/// Training arguments, optionally merged with the validation-zhihu split.
pub fn merge_training_splits(
    train: Vec<LabeledArgument>,
    validation_zhihu: Option<Vec<LabeledArgument>>,
    merge_zhihu: bool,
) -> Vec<LabeledArgument> {
    let mut merged = train;
    if merge_zhihu {
        if let Some(extra) = validation_zhihu {
            merged.extend(extra);
        }
    }
    merged
}

/// Anchor, positive, easy and hard negative descriptor indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quadruple {
    pub anchor: usize,
    pub positive: usize,
    pub easy_negative: usize,
    pub hard_negative: usize,
    /// Set when the anchor's L2 has a single L1 and the hard slot holds a
    /// second easy negative.
    #[serde(default)]
    pub hard_is_easy: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadrupleConfig {
    /// Quadruples per eligible anchor when `total` is unset.
    pub per_descriptor: usize,
    /// Target total; anchors are cycled in shuffled rounds until reached.
    pub total: Option<usize>,
    pub train_fraction: f64,
}

impl Default for QuadrupleConfig {
    fn default() -> Self {
        QuadrupleConfig {
            per_descriptor: 1,
            total: Some(702),
            train_fraction: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadrupleSet {
    pub train: Vec<Quadruple>,
    pub validation: Vec<Quadruple>,
    /// Descriptors skipped as anchors because their L1 has no second member.
    pub skipped_anchors: Vec<usize>,
    pub hard_fallbacks: usize,
}

impl QuadrupleSet {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all(&self) -> impl Iterator<Item = &Quadruple> {
        self.train.iter().chain(self.validation.iter())
    }
}

pub fn sample_quadruples(
    taxonomy: &ValueTaxonomy,
    config: &QuadrupleConfig,
    seed: u64,
) -> Result<QuadrupleSet> {
    if config.per_descriptor == 0 && config.total.is_none() {
        return Err(Error::Config("per_descriptor must be positive".into()));
    }
    let n = taxonomy.descriptor_count();
    let mut eligible = Vec::new();
    let mut skipped = Vec::new();
    for d in 0..n {
        if taxonomy.descriptors_of_l1(taxonomy.descriptor_l1(d)).len() >= 2 {
            eligible.push(d);
        } else {
            log::warn!(
                "descriptor `{}` is the only member of its L1 value; skipped as anchor",
                taxonomy.descriptor(d)
            );
            skipped.push(d);
        }
    }
    if eligible.is_empty() {
        return Err(taxonomy_err("no L1 value has two descriptors", Vec::new()));
    }
    if taxonomy.l2_count() < 2 {
        return Err(taxonomy_err("easy negatives need at least two L2 categories", Vec::new()));
    }

    let target = config
        .total
        .unwrap_or(eligible.len() * config.per_descriptor);
    let mut rng = seeded(seed);
    let mut quadruples = Vec::with_capacity(target);
    let mut hard_fallbacks = 0;
    'rounds: loop {
        let mut order = eligible.clone();
        order.shuffle(&mut rng);
        for &anchor in &order {
            if quadruples.len() >= target {
                break 'rounds;
            }
            let q = sample_one(taxonomy, anchor, &mut rng);
            if q.hard_is_easy {
                hard_fallbacks += 1;
            }
            quadruples.push(q);
        }
    }
    if hard_fallbacks > 0 {
        log::warn!("{hard_fallbacks} quadruples use a second easy negative in the hard slot");
    }

    quadruples.shuffle(&mut rng);
    let n_train = (quadruples.len() as f64 * config.train_fraction).round() as usize;
    let validation = quadruples.split_off(n_train.min(quadruples.len()));
    Ok(QuadrupleSet {
        train: quadruples,
        validation,
        skipped_anchors: skipped,
        hard_fallbacks,
    })
}

fn sample_one(taxonomy: &ValueTaxonomy, anchor: usize, rng: &mut crate::rng::Rng) -> Quadruple {
    let n = taxonomy.descriptor_count();
    let a_l1 = taxonomy.descriptor_l1(anchor);
    let a_l2 = taxonomy.descriptor_l2(anchor);
    let positives: Vec<usize> = taxonomy
        .descriptors_of_l1(a_l1)
        .into_iter()
        .filter(|&d| d != anchor)
        .collect();
    let easy: Vec<usize> = (0..n).filter(|&d| taxonomy.descriptor_l2(d) != a_l2).collect();
    let hard: Vec<usize> = (0..n)
        .filter(|&d| taxonomy.descriptor_l2(d) == a_l2 && taxonomy.descriptor_l1(d) != a_l1)
        .collect();

    let positive = *positives.choose(rng).expect("eligible anchor has a positive");
    let easy_negative = *easy.choose(rng).expect("at least two L2 categories");
    let (hard_negative, hard_is_easy) = match hard.choose(rng) {
        Some(&h) => (h, false),
        None => {
            let others: Vec<usize> = easy.iter().copied().filter(|&d| d != easy_negative).collect();
            let pick = others.choose(rng).copied().unwrap_or(easy_negative);
            (pick, true)
        }
    };
    Quadruple {
        anchor,
        positive,
        easy_negative,
        hard_negative,
        hard_is_easy,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntailmentPair {
    pub argument: String,
    pub descriptor: usize,
    pub label: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntailmentPairConfig {
    /// Negatives sampled per positive pair (per argument, rounded up).
    pub negative_ratio: f64,
    pub seed: u64,
}

impl Default for EntailmentPairConfig {
    fn default() -> Self {
        EntailmentPairConfig {
            negative_ratio: 1.0,
            seed: 0,
        }
    }
}

/// Positive pairs for every descriptor under the gold categories plus
/// sampled negatives from outside them. Arguments without gold labels
/// contribute negatives only.
pub fn build_entailment_pairs(
    arguments: &[LabeledArgument],
    taxonomy: &ValueTaxonomy,
    config: &EntailmentPairConfig,
) -> Result<Vec<EntailmentPair>> {
    let mut pairs = Vec::new();
    for (i, arg) in arguments.iter().enumerate() {
        let gold = taxonomy.resolve_l2(&arg.l2_labels)?;
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        for d in 0..taxonomy.descriptor_count() {
            if gold.contains(&taxonomy.descriptor_l2(d)) {
                positives.push(d);
            } else {
                negatives.push(d);
            }
        }
        let wanted = (config.negative_ratio * positives.len().max(1) as f64).ceil() as usize;
        let mut rng = seeded(derive_seed(config.seed, &format!("entailment-{i}")));
        negatives.shuffle(&mut rng);
        negatives.truncate(wanted);
        negatives.sort_unstable();
        for d in positives {
            pairs.push(EntailmentPair {
                argument: arg.text.clone(),
                descriptor: d,
                label: true,
            });
        }
        for d in negatives {
            pairs.push(EntailmentPair {
                argument: arg.text.clone(),
                descriptor: d,
                label: false,
            });
        }
    }
    Ok(pairs)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimilarityPair {
    pub argument: String,
    pub descriptor: usize,
    pub label: bool,
}

/// K positives (all descriptors under the gold categories) and K balanced
/// negatives per argument: one random descriptor per non-gold L1, then K of
/// those at random. If there are fewer non-gold L1 values than K, the
/// remainder is drawn from the other non-gold descriptors.
pub fn build_similarity_pairs(
    arguments: &[LabeledArgument],
    taxonomy: &ValueTaxonomy,
    seed: u64,
) -> Result<Vec<SimilarityPair>> {
    let mut pairs = Vec::new();
    for (i, arg) in arguments.iter().enumerate() {
        let gold = taxonomy.resolve_l2(&arg.l2_labels)?;
        let positives: Vec<usize> = (0..taxonomy.descriptor_count())
            .filter(|&d| gold.contains(&taxonomy.descriptor_l2(d)))
            .collect();
        let k = positives.len().max(1);
        let mut rng = derived(seed, &format!("similarity-{i}"));

        let mut per_l1 = Vec::new();
        for l1 in 0..taxonomy.l1_count() {
            if gold.contains(&taxonomy.l1_parent(l1)) {
                continue;
            }
            if let Some(&d) = taxonomy.descriptors_of_l1(l1).choose(&mut rng) {
                per_l1.push(d);
            }
        }
        per_l1.shuffle(&mut rng);
        let mut negatives: Vec<usize> = per_l1.into_iter().take(k).collect();
        if negatives.len() < k {
            let mut rest: Vec<usize> = (0..taxonomy.descriptor_count())
                .filter(|d| !gold.contains(&taxonomy.descriptor_l2(*d)) && !negatives.contains(d))
                .collect();
            rest.shuffle(&mut rng);
            let missing = k - negatives.len();
            negatives.extend(rest.into_iter().take(missing));
            if negatives.len() < k {
                log::warn!("argument {i}: only {} negatives available for {k} positives", negatives.len());
            }
        }

        for d in positives {
            pairs.push(SimilarityPair {
                argument: arg.text.clone(),
                descriptor: d,
                label: true,
            });
        }
        for d in negatives {
            pairs.push(SimilarityPair {
                argument: arg.text.clone(),
                descriptor: d,
                label: false,
            });
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_args() -> Vec<LabeledArgument> {
        vec![
            LabeledArgument {
                text: "curious minds ask".into(),
                l2_labels: vec!["Self-direction: thought".into()],
                l1_labels: None,
            },
            LabeledArgument {
                text: "stay safe and well".into(),
                l2_labels: vec!["Security: personal".into(), "Self-direction: thought".into()],
                l1_labels: None,
            },
            LabeledArgument {
                text: "nothing here".into(),
                l2_labels: vec![],
                l1_labels: None,
            },
        ]
    }

    #[test]
    fn toy_taxonomy_shape() {
        let t = ValueTaxonomy::toy();
        assert_eq!((t.l2_count(), t.l1_count(), t.descriptor_count()), (2, 4, 8));
        assert!(t.validate(TaxonomyShape::Official).is_err());
    }

    #[test]
    fn missing_l1_parent_names_the_descriptor() {
        let raw = r#"{"l3": ["A"], "l2": {"X": "A"}, "l1": {"x1": "X"},
            "descriptors": {"good one": "x1", "orphan sentence": "nope"}}"#;
        let err = ValueTaxonomy::from_json(raw, TaxonomyShape::Any).unwrap_err();
        assert!(err.to_string().contains("orphan sentence"), "{err}");
    }

    #[test]
    fn official_cardinality_is_enforced() {
        let raw = r#"{"l3": ["A"], "l2": {"X": "A"}, "l1": {"x1": "X"}, "descriptors": {"d": "x1"}}"#;
        let err = ValueTaxonomy::from_json(raw, TaxonomyShape::Official).unwrap_err();
        assert!(matches!(err, Error::Taxonomy { .. }));
        assert!(err.to_string().contains("218"));
    }

    #[test]
    fn l2_without_descriptors_is_rejected() {
        let raw = r#"{"l3": ["A"], "l2": {"X": "A", "Y": "A"}, "l1": {"x1": "X"}, "descriptors": {"d": "x1"}}"#;
        let err = ValueTaxonomy::from_json(raw, TaxonomyShape::Any).unwrap_err();
        assert!(err.to_string().contains('Y'));
    }

    #[test]
    fn quadruples_respect_class_relations() {
        let t = ValueTaxonomy::toy();
        let set = sample_quadruples(&t, &QuadrupleConfig { per_descriptor: 5, total: None, train_fraction: 0.9 }, 3).unwrap();
        assert_eq!(set.len(), 40);
        assert_eq!(set.train.len(), 36);
        for q in set.all() {
            assert_eq!(t.descriptor_l1(q.anchor), t.descriptor_l1(q.positive));
            assert_ne!(t.descriptor_l2(q.easy_negative), t.descriptor_l2(q.anchor));
            assert_eq!(t.descriptor_l2(q.hard_negative), t.descriptor_l2(q.anchor));
            assert_ne!(t.descriptor_l1(q.hard_negative), t.descriptor_l1(q.anchor));
            let ids: BTreeSet<_> = [q.anchor, q.positive, q.easy_negative, q.hard_negative].into();
            assert_eq!(ids.len(), 4);
        }
    }

    #[test]
    fn quadruple_total_and_determinism() {
        let t = ValueTaxonomy::toy();
        let cfg = QuadrupleConfig::default();
        let a = sample_quadruples(&t, &cfg, 11).unwrap();
        let b = sample_quadruples(&t, &cfg, 11).unwrap();
        assert_eq!(a.len(), 702);
        assert_eq!(a.train.len(), 632);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn single_l1_category_falls_back_to_second_easy_negative() {
        let raw = r#"{"l3": ["A"], "l2": {"X": "A", "Y": "A"}, "l1": {"x1": "X", "y1": "Y"},
            "descriptors": {"x a": "x1", "x b": "x1", "y a": "y1", "y b": "y1"}}"#;
        let t = ValueTaxonomy::from_json(raw, TaxonomyShape::Any).unwrap();
        let set = sample_quadruples(&t, &QuadrupleConfig { per_descriptor: 2, total: None, train_fraction: 1.0 }, 0).unwrap();
        assert_eq!(set.hard_fallbacks, set.len());
        assert!(set.all().all(|q| q.hard_is_easy && q.hard_negative != q.easy_negative));
    }

    #[test]
    fn entailment_pairs_positive_and_negative_rules() {
        let t = ValueTaxonomy::toy();
        let pairs = build_entailment_pairs(&toy_args(), &t, &EntailmentPairConfig::default()).unwrap();
        let first: Vec<_> = pairs.iter().filter(|p| p.argument == "curious minds ask").collect();
        assert_eq!(first.iter().filter(|p| p.label).count(), 4);
        let unlabeled: Vec<_> = pairs.iter().filter(|p| p.argument == "nothing here").collect();
        assert!(unlabeled.iter().all(|p| !p.label));
        assert_eq!(unlabeled.len(), 1);
    }

    #[test]
    fn similarity_pairs_are_balanced_and_deterministic() {
        let t = ValueTaxonomy::toy();
        let a = build_similarity_pairs(&toy_args()[..1], &t, 5).unwrap();
        let b = build_similarity_pairs(&toy_args()[..1], &t, 5).unwrap();
        assert_eq!(a, b);
        let pos = a.iter().filter(|p| p.label).count();
        let neg = a.iter().filter(|p| !p.label).count();
        assert_eq!((pos, neg), (4, 4));
    }

    #[test]
    fn unknown_gold_label_is_a_schema_error() {
        let t = ValueTaxonomy::toy();
        let args = vec![LabeledArgument { text: "x".into(), l2_labels: vec!["Nope".into()], l1_labels: None }];
        assert!(matches!(build_similarity_pairs(&args, &t, 0), Err(Error::Schema(_))));
    }
}
