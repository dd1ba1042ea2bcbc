//! The 16-row feature-combination grid: one generator per family subset,
//! all trained and scored on the same split with the same seeds.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::metrics::{corpus_bleu, mean_rouge_l, perplexity};
use crate::annotator::AnnotatedCorpus;
use crate::artifact::{ensure_dir, sha256_hex, write_json, write_jsonl};
use crate::error::{Error, Result};
use crate::features::{filter_families, parse_families, FeatureFamily};
use crate::generator::{
    annotated_examples, split_examples, train_generator, AnnotatedExample, GenerationConfig, Generator, COUNTER_MARKER,
    HATE_MARKER,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridRow {
    pub id: usize,
    pub kind: String,
    pub families: Vec<FeatureFamily>,
}

impl GridRow {
    /// `None`, `All`, or the family names joined with `+`.
    pub fn label(&self) -> String {
        match self.families.len() {
            0 => "None".into(),
            4 => "All".into(),
            _ => self.families.iter().map(|f| f.as_str()).collect::<Vec<_>>().join("+"),
        }
    }

    pub fn family_set(&self) -> BTreeSet<FeatureFamily> {
        self.families.iter().copied().collect()
    }
}

/// All 16 family subsets, numbered and ordered as in the reference table.
pub fn feature_grid() -> Vec<GridRow> {
    use FeatureFamily::*;
    let rows: [(&str, &[FeatureFamily]); 16] = [
        ("Baseline", &[]),
        ("Val", &[Big5]),
        ("Val", &[HumVal]),
        ("Struct", &[ArgSch]),
        ("Struct", &[ArgType]),
        ("Val", &[HumVal, Big5]),
        ("Struct", &[ArgSch, ArgType]),
        ("Val+Struct", &[ArgSch, Big5]),
        ("Val+Struct", &[HumVal, ArgSch]),
        ("Val+Struct", &[HumVal, ArgType]),
        ("Val+Struct", &[Big5, ArgType]),
        ("Val+Struct", &[HumVal, Big5, ArgSch]),
        ("Val+Struct", &[HumVal, Big5, ArgType]),
        ("Val+Struct", &[Big5, ArgSch, ArgType]),
        ("Val+Struct", &[HumVal, ArgSch, ArgType]),
        ("Val+Struct", &[HumVal, Big5, ArgSch, ArgType]),
    ];
    rows.iter()
        .enumerate()
        .map(|(i, (kind, fams))| GridRow {
            id: i + 1,
            kind: kind.to_string(),
            families: fams.to_vec(),
        })
        .collect()
}

/// Picks rows by id (`8`) or `+`-joined family list (`argSch+big5`,
/// `baseline`). Items are separated by `,` or `;`. Empty selects all.
pub fn select_rows(spec: &str) -> Result<Vec<GridRow>> {
    let grid = feature_grid();
    if spec.trim().is_empty() || spec.trim().eq_ignore_ascii_case("all-rows") {
        return Ok(grid);
    }
    let mut out = Vec::new();
    for item in spec.split([';', ',']).map(str::trim).filter(|s| !s.is_empty()) {
        let row = match item.parse::<usize>() {
            Ok(id) => grid.iter().find(|r| r.id == id),
            Err(_) => {
                let fams = parse_families(item)?;
                grid.iter().find(|r| r.family_set() == fams)
            }
        }
        .ok_or_else(|| Error::Config(format!("`{item}` is not a grid row")))?;
        if !out.contains(row) {
            out.push(row.clone());
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub generation: GenerationConfig,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub split_seed: u64,
    /// Cap on scored test examples; `None` scores all.
    pub max_eval_examples: Option<usize>,
    pub workers: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            generation: GenerationConfig::default(),
            validation_fraction: 0.1,
            test_fraction: 0.1,
            split_seed: 0,
            max_eval_examples: None,
            workers: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub id: usize,
    pub kind: String,
    pub features: String,
    pub families: Vec<FeatureFamily>,
    pub bleu: f64,
    pub rouge_l: f64,
    pub ppl: f64,
    pub samples: usize,
    /// Digest of the train/validation/test item ids.
    pub split_digest: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl MetricReport {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// One scored generation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub item_id: String,
    pub context: String,
    pub reference: String,
    pub response: String,
}

/// Fixed train/validation/test split shared by every row.
#[derive(Clone, Debug)]
pub struct GridSplit {
    pub train: Vec<AnnotatedExample>,
    pub validation: Vec<AnnotatedExample>,
    pub test: Vec<AnnotatedExample>,
}

impl GridSplit {
    pub fn new(corpus: &AnnotatedCorpus, config: &GridConfig) -> Result<Self> {
        let all = annotated_examples(corpus);
        let (rest, test) = split_examples(&all, config.test_fraction, config.split_seed);
        let frac = config.validation_fraction / (1.0 - config.test_fraction).max(1e-9);
        let (train, validation) = split_examples(&rest, frac, config.split_seed.wrapping_add(1));
        if train.is_empty() || test.is_empty() {
            return Err(Error::EmptyCorpus(format!(
                "split left {} training and {} test examples",
                train.len(),
                test.len()
            )));
        }
        let mut test = test;
        if let Some(cap) = config.max_eval_examples {
            test.truncate(cap);
        }
        Ok(GridSplit { train, validation, test })
    }

    pub fn digest(&self) -> String {
        let mut text = String::new();
        for (name, part) in [("train", &self.train), ("validation", &self.validation), ("test", &self.test)] {
            text.push_str(name);
            for e in part {
                text.push_str(&format!(" {}:{}", e.dialogue_id, e.turn_index));
            }
            text.push('\n');
        }
        sha256_hex(text.as_bytes())
    }
}

fn render_context(e: &AnnotatedExample) -> String {
    let mut parts = Vec::new();
    for (h, c) in &e.context {
        parts.push(format!("{HATE_MARKER} {h} {COUNTER_MARKER} {c}"));
    }
    parts.push(format!("{HATE_MARKER} {}", e.query));
    parts.join(" ")
}

/// Generates for every test example with its gold response features as
/// the desired codes.
pub fn generate_test_set(generator: &Generator, test: &[AnnotatedExample]) -> Result<Vec<GenerationRecord>> {
    let fams = &generator.config().families;
    test.iter()
        .map(|e| {
            let desired = filter_families(&e.response_features, fams);
            let out = generator.generate(&e.context, &e.query, &desired, &e.query_features)?;
            Ok(GenerationRecord {
                item_id: format!("{}:{}", e.dialogue_id, e.turn_index),
                context: render_context(e),
                reference: e.response.clone(),
                response: out.response,
            })
        })
        .collect()
}

/// Trains and scores one row.
pub fn run_row(row: &GridRow, split: &GridSplit, config: &GridConfig) -> Result<(MetricReport, Generator, Vec<GenerationRecord>)> {
    let mut gen_cfg = config.generation.clone();
    gen_cfg.families = row.family_set();
    let generator = train_generator(&split.train, &split.validation, &gen_cfg)?;
    let records = generate_test_set(&generator, &split.test)?;
    let hyps: Vec<String> = records.iter().map(|r| r.response.clone()).collect();
    let refs: Vec<String> = records.iter().map(|r| r.reference.clone()).collect();
    let ppl = perplexity(&generator, &generator.batches(&split.test)?)?;
    let report = MetricReport {
        id: row.id,
        kind: row.kind.clone(),
        features: row.label(),
        families: row.families.clone(),
        bleu: corpus_bleu(&hyps, &refs)?,
        rouge_l: mean_rouge_l(&hyps, &refs)?,
        ppl,
        samples: records.len(),
        split_digest: split.digest(),
        seed: gen_cfg.train.seed,
        error: None,
    };
    Ok((report, generator, records))
}

fn row_dir(out: &Path, row: &GridRow) -> PathBuf {
    out.join(format!("row-{:02}", row.id))
}

/// Runs `rows` on a split shared by all of them. A failing row is reported
/// with its error and the grid continues. With `out_dir`, each row's
/// checkpoint, generations and metrics are written under `row-NN/` and the
/// table to `grid.csv`.
pub fn run_feature_grid(
    corpus: &AnnotatedCorpus,
    rows: &[GridRow],
    config: &GridConfig,
    out_dir: Option<&Path>,
) -> Result<Vec<MetricReport>> {
    let split = GridSplit::new(corpus, config)?;
    let digest = split.digest();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<MetricReport>>> = Mutex::new(vec![None; rows.len()]);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(row) = rows.get(i) else { break };
        log::info!("grid row {} ({})", row.id, row.label());
        let report = match run_row(row, &split, config).and_then(|(report, generator, records)| {
            if let Some(out) = out_dir {
                let dir = row_dir(out, row);
                generator.save(&dir.join("checkpoint"))?;
                write_jsonl(&dir.join("generations.jsonl"), &records)?;
                write_json(&dir.join("metrics.json"), &report)?;
            }
            Ok(report)
        }) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("grid row {} failed: {e}", row.id);
                MetricReport {
                    id: row.id,
                    kind: row.kind.clone(),
                    features: row.label(),
                    families: row.families.clone(),
                    bleu: f64::NAN,
                    rouge_l: f64::NAN,
                    ppl: f64::NAN,
                    samples: 0,
                    split_digest: digest.clone(),
                    seed: config.generation.train.seed,
                    error: Some(e.to_string()),
                }
            }
        };
        results.lock().expect("grid results lock")[i] = Some(report);
    };
    let workers = config.workers.clamp(1, rows.len().max(1));
    if workers == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(&worker);
            }
        });
    }
    let reports: Vec<MetricReport> = results
        .into_inner()
        .expect("grid results lock")
        .into_iter()
        .map(|r| r.expect("every row visited"))
        .collect();
    if let Some(out) = out_dir {
        ensure_dir(out)?;
        write_grid_csv(&reports, &out.join("grid.csv"))?;
        write_json(&out.join("split.json"), &SplitSummary::from(&split))?;
    }
    Ok(reports)
}

#[derive(Serialize)]
struct SplitSummary {
    train: usize,
    validation: usize,
    test: usize,
    digest: String,
    test_items: Vec<String>,
}

impl From<&GridSplit> for SplitSummary {
    fn from(s: &GridSplit) -> Self {
        SplitSummary {
            train: s.train.len(),
            validation: s.validation.len(),
            test: s.test.len(),
            digest: s.digest(),
            test_items: s.test.iter().map(|e| format!("{}:{}", e.dialogue_id, e.turn_index)).collect(),
        }
    }
}

/// `ID,Type,Features,BLEU,RougeL,PPL`; failed rows have empty metric cells.
pub fn write_grid_csv(reports: &[MetricReport], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["ID", "Type", "Features", "BLEU", "RougeL", "PPL"])?;
    for r in reports {
        let cell = |v: f64| if r.failed() { String::new() } else { format!("{v:.2}") };
        w.write_record([
            r.id.to_string(),
            r.kind.clone(),
            r.features.clone(),
            cell(r.bleu),
            cell(r.rouge_l),
            cell(r.ppl),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
