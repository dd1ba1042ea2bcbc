//! Declarative run configuration, flag overrides and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::annotator::BaselineConfig;
use crate::argtype_detector::{ArgTypeConfig, KeywordRule};
use crate::artifact::{read_json, sha256_hex, write_json};
use crate::corpus::CorpusFormat;
use crate::error::{Error, Result};
use crate::evaluation::GridConfig;
use crate::features::FeatureFamily;
use crate::generator::GenerationConfig;
use crate::nn::EncoderSpec;
use crate::rng::derive_seed;
use crate::taxonomy::{load_taxonomy, EntailmentPairConfig, QuadrupleConfig, TaxonomyShape, ValueTaxonomy};
use crate::value_detector::{ArgumentEmbedderConfig, ClassificationConfig, EmbedderConfig, EntailmentConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Dialogue corpus for `ingest`.
    pub corpus: Option<PathBuf>,
    pub corpus_format: Option<CorpusFormat>,
    /// Extra single-turn pair corpus merged at ingest.
    pub pairs: Option<PathBuf>,
    /// Taxonomy JSON; the bundled toy taxonomy when unset.
    pub taxonomy: Option<PathBuf>,
    /// Labeled value arguments: JSON Lines, or shared-task `arguments-*.tsv`.
    pub value_train: Option<PathBuf>,
    pub value_validation: Option<PathBuf>,
    /// Extra split appended to `value_train` when `values.merge_zhihu` is set.
    pub value_validation_zhihu: Option<PathBuf>,
    /// Labeled argument-type pairs (JSON Lines).
    pub argtype_pairs: Option<PathBuf>,
    /// Per-family labeled texts for the trainable baseline ports.
    pub port_train: BTreeMap<String, PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValuesConfig {
    pub classification: ClassificationConfig,
    pub entailment: EntailmentConfig,
    pub entailment_pairs: EntailmentPairConfig,
    pub quadruples: QuadrupleConfig,
    pub descriptor_embedder: EmbedderConfig,
    pub argument_embedder: ArgumentEmbedderConfig,
    /// Held out from `value_train` when no validation file is given.
    pub validation_fraction: f64,
    /// Enforce the 4/20/218 cardinalities on `paths.taxonomy`.
    pub official_taxonomy: bool,
    pub merge_zhihu: bool,
}

impl Default for ValuesConfig {
    fn default() -> Self {
        ValuesConfig {
            classification: ClassificationConfig::default(),
            entailment: EntailmentConfig::default(),
            entailment_pairs: EntailmentPairConfig::default(),
            quadruples: QuadrupleConfig::default(),
            descriptor_embedder: EmbedderConfig::default(),
            argument_embedder: ArgumentEmbedderConfig::default(),
            validation_fraction: 0.1,
            official_taxonomy: true,
            merge_zhihu: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArgTypeRunConfig {
    pub model: ArgTypeConfig,
    /// The two encoder families of the four ensemble members.
    pub encoders: [EncoderSpec; 2],
    pub keywords: KeywordRule,
    /// Pairs held out with counter texts unseen in training.
    pub test_size: usize,
    pub validation_fraction: f64,
}

impl Default for ArgTypeRunConfig {
    fn default() -> Self {
        ArgTypeRunConfig {
            model: ArgTypeConfig::default(),
            encoders: [EncoderSpec::tiny(), EncoderSpec::tiny()],
            keywords: KeywordRule::default(),
            test_size: 200,
            validation_fraction: 0.1,
        }
    }
}

/// What backs one annotation slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PortSpec {
    /// Fixed labels for every input.
    Stub { labels: Vec<String> },
    /// Cue-word matching; bundled cues when `cues` is unset.
    Lexical {
        #[serde(default)]
        cues: Option<PathBuf>,
    },
    /// Trainable baseline; `checkpoint` defaults to the run's own.
    Baseline {
        #[serde(default)]
        checkpoint: Option<PathBuf>,
    },
    /// The three value models; `checkpoint` defaults to the run's own.
    Values {
        #[serde(default)]
        checkpoint: Option<PathBuf>,
    },
    /// The argument-type ensemble; `checkpoint` defaults to the run's own.
    ArgType {
        #[serde(default)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationConfig {
    pub big5: PortSpec,
    pub humval: PortSpec,
    pub scheme: PortSpec,
    pub argtype: PortSpec,
    pub baseline: BaselineConfig,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        AnnotationConfig {
            big5: PortSpec::Lexical { cues: None },
            humval: PortSpec::Values { checkpoint: None },
            scheme: PortSpec::Lexical { cues: None },
            argtype: PortSpec::ArgType { checkpoint: None },
            baseline: BaselineConfig::default(),
        }
    }
}

impl AnnotationConfig {
    pub fn port(&self, family: FeatureFamily) -> &PortSpec {
        match family {
            FeatureFamily::Big5 => &self.big5,
            FeatureFamily::HumVal => &self.humval,
            FeatureFamily::ArgSch => &self.scheme,
            FeatureFamily::ArgType => &self.argtype,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    /// Row selection as accepted by `select_rows`; empty runs all 16.
    pub rows: String,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub max_eval_examples: Option<usize>,
    pub workers: usize,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings {
            rows: String::new(),
            validation_fraction: 0.1,
            test_fraction: 0.1,
            max_eval_examples: None,
            workers: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumanEvalSettings {
    pub sample_size: usize,
}

impl Default for HumanEvalSettings {
    fn default() -> Self {
        HumanEvalSettings { sample_size: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Every stage seed is derived from this one.
    pub seed: u64,
    pub paths: PathsConfig,
    pub values: ValuesConfig,
    pub argtype: ArgTypeRunConfig,
    pub annotation: AnnotationConfig,
    pub generation: GenerationConfig,
    /// Held out from the annotated corpus by `train-generator`.
    pub generator_validation_fraction: f64,
    pub grid: GridSettings,
    pub humeval: HumanEvalSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            paths: PathsConfig::default(),
            values: ValuesConfig::default(),
            argtype: ArgTypeRunConfig::default(),
            annotation: AnnotationConfig::default(),
            generation: GenerationConfig {
                families: FeatureFamily::ALL.into_iter().collect(),
                ..GenerationConfig::default()
            },
            generator_validation_fraction: 0.1,
            grid: GridSettings::default(),
            humeval: HumanEvalSettings::default(),
        }
    }
}

/// Sets `dotted.path` in a JSON tree. The value is parsed as JSON when it
/// parses, else taken as a string. Unknown paths are rejected.
pub fn apply_override(tree: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = path.trim().split('.').collect();
    let mut node = tree;
    for (i, part) in parts.iter().enumerate() {
        let open = is_open_map(&parts[..i]);
        let Value::Object(map) = node else {
            return Err(Error::Config(format!("{path}: `{}` is not a table", parts[..i].join("."))));
        };
        if !map.contains_key(*part) && !open {
            return Err(Error::Config(format!("{path}: unknown field `{part}`")));
        }
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        let slot = map.entry(part.to_string()).or_insert(Value::Null);
        if slot.is_null() {
            *slot = Value::Object(Default::default());
        }
        node = slot;
    }
    Ok(())
}

fn is_open_map(parent: &[&str]) -> bool {
    parent == ["paths", "port_train"]
}

impl RunConfig {
    /// Reads the config file (defaults when `None`) and applies overrides;
    /// overrides win.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut tree = serde_json::to_value(RunConfig::default())?;
        if let Some(path) = path {
            let file: Value = read_json(path)?;
            merge(&mut tree, file);
        }
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        serde_json::from_value(tree).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    /// Field-level problems; empty when the config is usable.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        let paths = &self.paths;
        let mut check = |field: &str, p: &Option<PathBuf>| {
            if let Some(p) = p {
                if !p.exists() {
                    out.push(format!("paths.{field}: `{}` does not exist", p.display()));
                }
            }
        };
        check("corpus", &paths.corpus);
        check("pairs", &paths.pairs);
        check("taxonomy", &paths.taxonomy);
        check("value_train", &paths.value_train);
        check("value_validation", &paths.value_validation);
        check("value_validation_zhihu", &paths.value_validation_zhihu);
        check("argtype_pairs", &paths.argtype_pairs);
        for (family, p) in &paths.port_train {
            if family.parse::<FeatureFamily>().is_err() {
                out.push(format!("paths.port_train.{family}: unknown feature family"));
            }
            if !p.exists() {
                out.push(format!("paths.port_train.{family}: `{}` does not exist", p.display()));
            }
        }
        for family in FeatureFamily::ALL {
            let slot = format!("annotation.{}", slot_name(family));
            match self.annotation.port(family) {
                PortSpec::Values { .. } if family != FeatureFamily::HumVal => {
                    out.push(format!("{slot}: value models only serve the humVal slot"))
                }
                PortSpec::ArgType { .. } if family != FeatureFamily::ArgType => {
                    out.push(format!("{slot}: the argtype ensemble only serves the argType slot"))
                }
                PortSpec::Baseline { .. } if !family.is_single_label() => {
                    out.push(format!("{slot}: baseline ports support single-label families only"))
                }
                PortSpec::Lexical { cues: Some(p) } | PortSpec::Baseline { checkpoint: Some(p) }
                | PortSpec::Values { checkpoint: Some(p) } | PortSpec::ArgType { checkpoint: Some(p) }
                    if !p.exists() =>
                {
                    out.push(format!("{slot}: `{}` does not exist", p.display()))
                }
                PortSpec::Stub { labels } if labels.iter().any(|l| l.parse::<crate::features::ControlCode>().is_err()) => {
                    out.push(format!("{slot}.labels: unknown control code"))
                }
                _ => {}
            }
        }
        if let Err(e) = self.generation.validate() {
            out.push(format!("generation: {e}"));
        }
        for (field, v) in [
            ("values.validation_fraction", self.values.validation_fraction),
            ("argtype.validation_fraction", self.argtype.validation_fraction),
            ("generator_validation_fraction", self.generator_validation_fraction),
            ("grid.validation_fraction", self.grid.validation_fraction),
            ("grid.test_fraction", self.grid.test_fraction),
        ] {
            if !(0.0..1.0).contains(&v) {
                out.push(format!("{field}: {v} is outside [0, 1)"));
            }
        }
        if self.grid.validation_fraction + self.grid.test_fraction >= 1.0 {
            out.push("grid: validation and test fractions leave no training data".into());
        }
        if let Err(e) = crate::evaluation::select_rows(&self.grid.rows) {
            out.push(format!("grid.rows: {e}"));
        }
        for (field, lr) in [
            ("values.classification.train.learning_rate", self.values.classification.train.learning_rate),
            ("values.entailment.train.learning_rate", self.values.entailment.train.learning_rate),
            ("values.descriptor_embedder.train.learning_rate", self.values.descriptor_embedder.train.learning_rate),
            ("values.argument_embedder.train.learning_rate", self.values.argument_embedder.train.learning_rate),
            ("argtype.model.train.learning_rate", self.argtype.model.train.learning_rate),
            ("generation.train.learning_rate", self.generation.train.learning_rate),
        ] {
            if !(lr.is_finite() && lr > 0.0) {
                out.push(format!("{field}: must be positive"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.diagnostics();
        if d.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(d.join("; ")))
        }
    }

    /// Canonical JSON digest.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(serde_json::to_string(&serde_json::to_value(self)?)?.as_bytes()))
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }

    pub fn taxonomy(&self) -> Result<ValueTaxonomy> {
        match &self.paths.taxonomy {
            Some(p) if self.values.official_taxonomy => load_taxonomy(p),
            Some(p) => ValueTaxonomy::load(p, TaxonomyShape::Any),
            None => Ok(ValueTaxonomy::toy()),
        }
    }

    pub fn grid_config(&self) -> GridConfig {
        let mut generation = self.generation.clone();
        generation.train.seed = self.stage_seed("generator");
        GridConfig {
            generation,
            validation_fraction: self.grid.validation_fraction,
            test_fraction: self.grid.test_fraction,
            split_seed: self.stage_seed("grid-split"),
            max_eval_examples: self.grid.max_eval_examples,
            workers: self.grid.workers,
        }
    }
}

pub fn slot_name(family: FeatureFamily) -> &'static str {
    match family {
        FeatureFamily::Big5 => "big5",
        FeatureFamily::HumVal => "humval",
        FeatureFamily::ArgSch => "scheme",
        FeatureFamily::ArgType => "argtype",
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    // A tagged port spec replaces the default outright.
                    Some(slot) if slot.is_object() && v.is_object() && v.get("kind").is_none() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// One finished command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub finished_unix: u64,
    /// Output path (relative to the run dir) to its SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub master_seed: u64,
    pub versions: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn new(config: &RunConfig) -> Result<Self> {
        let mut versions = BTreeMap::new();
        versions.insert("counterarg-core".into(), env!("CARGO_PKG_VERSION").into());
        versions.insert("format".into(), "1".into());
        Ok(Manifest {
            config_hash: config.hash()?,
            master_seed: config.seed,
            versions,
            stages: BTreeMap::new(),
        })
    }

    pub fn load_or_new(path: &Path, config: &RunConfig) -> Result<Self> {
        if path.exists() {
            let mut m: Manifest = read_json(path)?;
            m.config_hash = config.hash()?;
            m.master_seed = config.seed;
            Ok(m)
        } else {
            Manifest::new(config)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// A stage is complete when it ran under the current config and its
    /// outputs still hash to the recorded values.
    pub fn is_complete(&self, command: &str, run_dir: &Path) -> bool {
        let Some(stage) = self.stages.get(command) else {
            return false;
        };
        stage.config_hash == self.config_hash
            && stage
                .outputs
                .iter()
                .all(|(rel, digest)| hash_path(&run_dir.join(rel)).ok().as_deref() == Some(digest.as_str()))
    }

    pub fn record(&mut self, command: &str, seed: u64, run_dir: &Path, outputs: &[PathBuf]) -> Result<()> {
        let mut hashed = BTreeMap::new();
        for p in outputs {
            let rel = p.strip_prefix(run_dir).unwrap_or(p).to_string_lossy().into_owned();
            hashed.insert(rel, hash_path(p)?);
        }
        let finished_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        self.stages.insert(
            command.to_string(),
            StageRecord {
                command: command.to_string(),
                config_hash: self.config_hash.clone(),
                seed,
                finished_unix,
                outputs: hashed,
            },
        );
        Ok(())
    }
}

/// SHA-256 of a file, or of the sorted relative paths and contents of a
/// directory tree.
pub fn hash_path(path: &Path) -> Result<String> {
    if path.is_file() {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        return Ok(sha256_hex(&bytes));
    }
    let mut files = Vec::new();
    collect_files(path, &mut files)?;
    files.sort();
    let mut acc = Vec::new();
    for f in files {
        acc.extend(f.strip_prefix(path).unwrap_or(&f).to_string_lossy().as_bytes());
        acc.push(0);
        acc.extend(std::fs::read(&f).map_err(|e| Error::io(&f, e))?);
    }
    Ok(sha256_hex(&acc))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let c = RunConfig::default();
        assert_eq!(c.values.classification.train.learning_rate, 1e-5);
        assert_eq!(c.values.entailment.train.learning_rate, 1e-5);
        assert_eq!(c.argtype.model.train.learning_rate, 1e-5);
        assert_eq!(c.generation.train.learning_rate, 1e-5);
        assert_eq!(c.values.descriptor_embedder.train.learning_rate, 2e-5);
        assert_eq!(c.values.argument_embedder.train.learning_rate, 2e-5);
        assert_eq!(c.values.classification.train.patience, 4);
        assert_eq!(c.values.descriptor_embedder.train.patience, 5);
        assert_eq!(c.generation.beam_width, 5);
        assert!(c.diagnostics().is_empty());
    }

    #[test]
    fn overrides_win_and_unknown_fields_fail() {
        let c = RunConfig::load(None, &["generation.beam_width=2".into(), "seed=7".into()]).unwrap();
        assert_eq!(c.generation.beam_width, 2);
        assert_eq!(c.seed, 7);
        assert!(RunConfig::load(None, &["generation.beam_wdth=2".into()]).is_err());
        assert!(RunConfig::load(None, &["nonsense".into()]).is_err());
        let c = RunConfig::load(None, &[r#"annotation.big5={"kind":"stub","labels":["openness"]}"#.into()]).unwrap();
        assert_eq!(c.annotation.big5, PortSpec::Stub { labels: vec!["openness".into()] });
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.json");
        std::fs::write(&file, r#"{"annotation": {"big5": {"kind": "baseline"}}}"#).unwrap();
        let c = RunConfig::load(Some(&file), &[]).unwrap();
        assert_eq!(c.annotation.big5, PortSpec::Baseline { checkpoint: None });
    }

    #[test]
    fn diagnostics_name_fields() {
        let mut c = RunConfig::default();
        c.paths.corpus = Some("/definitely/missing.jsonl".into());
        c.annotation.big5 = PortSpec::Values { checkpoint: None };
        c.grid.rows = "99".into();
        let d = c.diagnostics();
        assert!(d.iter().any(|m| m.starts_with("paths.corpus")));
        assert!(d.iter().any(|m| m.starts_with("annotation.big5")));
        assert!(d.iter().any(|m| m.starts_with("grid.rows")));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.seed += 1;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }
}
