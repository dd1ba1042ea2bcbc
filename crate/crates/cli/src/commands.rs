use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde_json::json;

use counterarg_core::annotator::{
    annotate_corpus, feature_distribution_report, train_baseline_port, write_distribution_csv, AnnotatedCorpus,
    AnnotationPorts, ArgTypePort, BaselinePort, ClassifierPort, LabeledText, LexicalPort, StubPort, ValuePort,
};
use counterarg_core::argtype_detector::{
    curate_topic_keywords, expand_keywords, load_labeled_pairs, split_unseen_counters, train_argtype_model,
    ArgTypeEnsemble, ArgTypeVariant, BundledTagger, LabeledPair, SuffixPluralizer, TableLexicon,
};
use counterarg_core::artifact::{read_json, read_jsonl, write_json};
use counterarg_core::config::{slot_name, PortSpec};
use counterarg_core::corpus::{load_dialogue_corpus, CorpusFormat, Dialogue, DialogueCorpus};
use counterarg_core::evaluation::{
    export_human_eval_packets, perplexity, run_feature_grid, select_rows, GenerationRecord, MetricReport,
};
use counterarg_core::features::{ControlCode, FeatureFamily};
use counterarg_core::generator::{
    annotated_examples, parse_feature_set, split_examples, train_generator as fit_generator, GenerationRequest,
    Generator,
};
use counterarg_core::nn::Vocab;
use counterarg_core::rng::seeded;
use counterarg_core::scoring::macro_f1;
use counterarg_core::taxonomy::{
    build_entailment_pairs, build_similarity_pairs, load_labeled_arguments, merge_training_splits, sample_quadruples, LabeledArgument,
    ValueTaxonomy,
};
use counterarg_core::value_detector::{
    ensemble_predict, train_argument_embedder, train_classification_model, train_descriptor_embedder,
    train_entailment_model, ClassificationModel, EmbeddingSpace, EntailmentModel, ValuePrediction, ValuePredictor,
};

use crate::run::RunContext;

fn require<'a>(field: &str, p: &'a Option<PathBuf>) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| counterarg_core::Error::Config(format!("{field} is required for this command")).into())
}

fn holdout<T: Clone>(items: &[T], fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut seeded(seed));
    let n_val = ((items.len() as f64 * fraction).round() as usize).min(items.len().saturating_sub(1));
    let (val, train) = idx.split_at(n_val);
    (
        train.iter().map(|&i| items[i].clone()).collect(),
        val.iter().map(|&i| items[i].clone()).collect(),
    )
}

pub fn ingest(ctx: &RunContext, force: bool) -> Result<()> {
    if ctx.skip("ingest", force)? {
        return Ok(());
    }
    let paths = &ctx.config.paths;
    let path = require("paths.corpus", &paths.corpus)?;
    let format = paths.corpus_format.unwrap_or(CorpusFormat::Canonical);
    let mut corpus = load_dialogue_corpus(path, format)?;
    if let Some(pairs) = &paths.pairs {
        corpus.extend(load_dialogue_corpus(pairs, CorpusFormat::ConanPairs)?);
    }
    let out = ctx.artifact("corpus.jsonl");
    corpus.save_jsonl(&out)?;
    let mut topics: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &corpus.dialogues {
        *topics.entry(d.topic.as_str()).or_default() += 1;
    }
    let stats = ctx.artifact("corpus_stats.json");
    write_json(
        &stats,
        &json!({"dialogues": corpus.len(), "turns": corpus.turn_count(), "topics": topics}),
    )?;
    println!("ingested {} dialogues, {} turns", corpus.len(), corpus.turn_count());
    ctx.finish("ingest", ctx.config.seed, &[out, stats])
}

fn value_f1(taxonomy: &ValueTaxonomy, preds: &[ValuePrediction], gold: &[LabeledArgument]) -> f64 {
    let names: Vec<&str> = taxonomy.l2_names().collect();
    let p: Vec<Vec<bool>> = preds
        .iter()
        .map(|p| names.iter().map(|n| p.l2.get(*n).is_some_and(|s| s.decision == 1)).collect())
        .collect();
    let g: Vec<Vec<bool>> = gold
        .iter()
        .map(|a| names.iter().map(|n| a.l2_labels.iter().any(|l| l == n)).collect())
        .collect();
    macro_f1(&p, &g)
}

pub fn train_values(ctx: &RunContext, force: bool) -> Result<()> {
    if ctx.skip("train-values", force)? {
        return Ok(());
    }
    let cfg = &ctx.config.values;
    let seed = ctx.config.stage_seed("values");
    let taxonomy = ctx.config.taxonomy()?;
    let zhihu = match &ctx.config.paths.value_validation_zhihu {
        Some(p) => Some(load_labeled_arguments(p)?),
        None => None,
    };
    let all = merge_training_splits(
        load_labeled_arguments(require("paths.value_train", &ctx.config.paths.value_train)?)?,
        zhihu,
        cfg.merge_zhihu,
    );
    let (train, validation) = match &ctx.config.paths.value_validation {
        Some(p) => (all, load_labeled_arguments(p)?),
        None => holdout(&all, cfg.validation_fraction, seed),
    };
    let dir = ctx.artifact("values");

    let mut c_cfg = cfg.classification.clone();
    c_cfg.train.seed = seed;
    let classification = train_classification_model(&taxonomy, &train, &validation, &c_cfg)?;
    classification.save(&dir.join("classification"))?;

    let mut pair_cfg = cfg.entailment_pairs.clone();
    pair_cfg.seed = seed;
    let e_train = build_entailment_pairs(&train, &taxonomy, &pair_cfg)?;
    let e_val = build_entailment_pairs(&validation, &taxonomy, &pair_cfg)?;
    let mut e_cfg = cfg.entailment.clone();
    e_cfg.train.seed = seed;
    let entailment = train_entailment_model(&taxonomy, &e_train, &e_val, &e_cfg)?;
    entailment.save(&dir.join("entailment"))?;

    let quadruples = sample_quadruples(&taxonomy, &cfg.quadruples, seed)?;
    let texts = train
        .iter()
        .map(|a| a.text.as_str())
        .chain((0..taxonomy.descriptor_count()).map(|d| taxonomy.descriptor(d)));
    let mut d_cfg = cfg.descriptor_embedder.clone();
    d_cfg.train.seed = seed;
    let (descriptor, centroids) = train_descriptor_embedder(&taxonomy, &quadruples, Vocab::build(texts, 1), &d_cfg)?;
    descriptor.save(&dir.join("descriptor"), &taxonomy)?;
    let s_train = build_similarity_pairs(&train, &taxonomy, seed)?;
    let s_val = build_similarity_pairs(&validation, &taxonomy, seed)?;
    let mut a_cfg = cfg.argument_embedder.clone();
    a_cfg.train.seed = seed;
    let space = train_argument_embedder(&taxonomy, &s_train, &s_val, &descriptor, &centroids, &a_cfg)?;
    space.save(&dir.join("similarity"))?;

    let mut metrics = json!({
        "train": train.len(),
        "validation": validation.len(),
        "entailment_pairs": e_train.len(),
        "similarity_pairs": s_train.len(),
        "quadruples": quadruples.len(),
    });
    if !validation.is_empty() {
        let texts: Vec<String> = validation.iter().map(|a| a.text.clone()).collect();
        let members: [&dyn ValuePredictor; 3] = [&classification, &entailment, &space];
        for m in members {
            metrics[format!("{}_macro_f1", m.model_type())] = json!(value_f1(&taxonomy, &m.predict(&texts)?, &validation));
        }
        metrics["ensemble_macro_f1"] = json!(value_f1(&taxonomy, &ensemble_predict(&texts, members)?, &validation));
    }
    let metrics_path = dir.join("metrics.json");
    write_json(&metrics_path, &metrics)?;
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    ctx.finish("train-values", seed, &[dir])
}

fn pairs_as_corpus(pairs: &[LabeledPair]) -> Result<DialogueCorpus> {
    let dialogues = pairs
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.topic.map(|t| (i, p, t)))
        .map(|(i, p, t)| Dialogue::from_pairs(format!("pair-{i}"), t, [(p.hate.as_str(), p.counter.as_str())]))
        .collect::<counterarg_core::Result<Vec<_>>>()?;
    Ok(DialogueCorpus::new(dialogues))
}

pub fn train_argtype(ctx: &RunContext, force: bool) -> Result<()> {
    if ctx.skip("train-argtype", force)? {
        return Ok(());
    }
    let cfg = &ctx.config.argtype;
    let seed = ctx.config.stage_seed("argtype");
    let pairs = load_labeled_pairs(require("paths.argtype_pairs", &ctx.config.paths.argtype_pairs)?)?;
    let (rest, test) = split_unseen_counters(&pairs, cfg.test_size, seed);
    let (train, validation) = holdout(&rest, cfg.validation_fraction, seed);
    let curated = curate_topic_keywords(&pairs_as_corpus(&train)?, &BundledTagger, &cfg.keywords);
    let keywords = expand_keywords(&curated, &TableLexicon::bundled(), &SuffixPluralizer);
    let mut model_cfg = cfg.model.clone();
    model_cfg.train.seed = seed;
    let members = ArgTypeVariant::standard_four(&cfg.encoders[0], &cfg.encoders[1])
        .iter()
        .map(|v| {
            log::info!("training argtype member {}", v.name);
            train_argtype_model(&train, &validation, v, &model_cfg, v.masked.then_some(&keywords))
        })
        .collect::<counterarg_core::Result<Vec<_>>>()?;
    let ensemble = ArgTypeEnsemble::new(members)?;
    let dir = ctx.artifact("argtype");
    ensemble.save(&dir)?;
    keywords.save(&dir.join("keywords.json"))?;

    let mut metrics = json!({"train": train.len(), "validation": validation.len(), "test": test.len(), "keywords": keywords.len()});
    if !test.is_empty() {
        let inputs: Vec<_> = test.iter().map(|p| (p.hate.clone(), p.counter.clone(), p.topic)).collect();
        let gold: Vec<Vec<bool>> = test.iter().map(|p| p.label_vector().map(|v| v.to_vec())).collect::<counterarg_core::Result<_>>()?;
        let f1 = |labels: Vec<counterarg_core::argtype_detector::ArgTypeLabel>| {
            macro_f1(&labels.iter().map(|l| l.decisions.to_vec()).collect::<Vec<_>>(), &gold)
        };
        for m in &ensemble.members {
            metrics[format!("{}_macro_f1", m.variant().name)] = json!(f1(m.predict(&inputs)?));
        }
        metrics["ensemble_macro_f1"] = json!(f1(ensemble.predict(&inputs)?));
    }
    write_json(&dir.join("metrics.json"), &metrics)?;
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    ctx.finish("train-argtype", seed, &[dir])
}

fn build_port(ctx: &RunContext, family: FeatureFamily) -> Result<Box<dyn ClassifierPort>> {
    let spec = ctx.config.annotation.port(family);
    Ok(match spec {
        PortSpec::Stub { labels } => {
            let codes = labels.iter().map(|l| l.parse::<ControlCode>()).collect::<counterarg_core::Result<Vec<_>>>()?;
            Box::new(StubPort::new(family, codes)?)
        }
        PortSpec::Lexical { cues: None } => Box::new(LexicalPort::bundled(family)?),
        PortSpec::Lexical { cues: Some(p) } => Box::new(LexicalPort::load(family, p)?),
        PortSpec::Baseline { checkpoint } => {
            let dir = checkpoint.clone().unwrap_or_else(|| ctx.artifact(&format!("ports/{}", slot_name(family))));
            if dir.join("meta.json").exists() {
                Box::new(BaselinePort::load(&dir)?)
            } else if checkpoint.is_some() {
                bail!("no baseline checkpoint in {}", dir.display());
            } else {
                let path = ctx.config.paths.port_train.get(family.as_str()).ok_or_else(|| {
                    counterarg_core::Error::Config(format!(
                        "paths.port_train.{} is required to train the {} baseline port",
                        family.as_str(),
                        family.as_str()
                    ))
                })?;
                let texts: Vec<LabeledText> = read_jsonl(path)?;
                let seed = ctx.config.stage_seed(&format!("port-{}", family.as_str()));
                let (train, validation) = holdout(&texts, 0.1, seed);
                let mut cfg = ctx.config.annotation.baseline.clone();
                cfg.train.seed = seed;
                let port = train_baseline_port(family, &train, &validation, &cfg)?;
                port.save(&dir)?;
                Box::new(port)
            }
        }
        PortSpec::Values { checkpoint } => {
            let dir = checkpoint.clone().unwrap_or_else(|| ctx.artifact("values"));
            let taxonomy = ctx.config.taxonomy()?;
            let members: Vec<Box<dyn ValuePredictor>> = vec![
                Box::new(ClassificationModel::load(&dir.join("classification"), taxonomy.clone())?),
                Box::new(EntailmentModel::load(&dir.join("entailment"), taxonomy.clone())?),
                Box::new(EmbeddingSpace::load(&dir.join("similarity"), taxonomy)?),
            ];
            Box::new(ValuePort::new(members, json!({"checkpoint": dir}))?)
        }
        PortSpec::ArgType { checkpoint } => {
            let dir = checkpoint.clone().unwrap_or_else(|| ctx.artifact("argtype"));
            let ensemble = ArgTypeEnsemble::load(&dir).with_context(|| format!("loading argtype ensemble from {}", dir.display()))?;
            Box::new(ArgTypePort::new(Box::new(ensemble), json!({"checkpoint": dir})))
        }
    })
}

pub fn annotate(ctx: &RunContext, force: bool) -> Result<()> {
    if ctx.skip("annotate", force)? {
        return Ok(());
    }
    let corpus_path = ctx.artifact("corpus.jsonl");
    if !corpus_path.exists() {
        bail!("{} is missing; run `ingest` first", corpus_path.display());
    }
    let corpus = load_dialogue_corpus(&corpus_path, CorpusFormat::Canonical)?;
    let big5 = build_port(ctx, FeatureFamily::Big5)?;
    let humval = build_port(ctx, FeatureFamily::HumVal)?;
    let scheme = build_port(ctx, FeatureFamily::ArgSch)?;
    let argtype = build_port(ctx, FeatureFamily::ArgType)?;
    let ports = AnnotationPorts {
        big5: big5.as_ref(),
        humval: humval.as_ref(),
        scheme: scheme.as_ref(),
        argtype: argtype.as_ref(),
    };
    let annotated = annotate_corpus(&corpus, &ports)?;
    let out = ctx.artifact("annotated.jsonl");
    let run = ctx.artifact("annotation_run.json");
    let dist = ctx.artifact("distribution.csv");
    annotated.save_jsonl(&out)?;
    annotated.save_run(&run)?;
    write_distribution_csv(&feature_distribution_report(&annotated)?, &dist)?;
    println!(
        "annotated {} turns ({} failed)",
        annotated.turn_count(),
        annotated.run.error_turns
    );
    ctx.finish("annotate", ctx.config.seed, &[out, run, dist])
}

fn load_annotated(ctx: &RunContext) -> Result<AnnotatedCorpus> {
    let path = ctx.artifact("annotated.jsonl");
    if !path.exists() {
        bail!("{} is missing; run `annotate` first", path.display());
    }
    Ok(AnnotatedCorpus::load_jsonl(&path)?)
}

pub fn train_generator(ctx: &RunContext, force: bool) -> Result<()> {
    if ctx.skip("train-generator", force)? {
        return Ok(());
    }
    let seed = ctx.config.stage_seed("generator");
    let examples = annotated_examples(&load_annotated(ctx)?);
    let (train, validation) = split_examples(&examples, ctx.config.generator_validation_fraction, seed);
    let mut cfg = ctx.config.generation.clone();
    cfg.train.seed = seed;
    let generator = fit_generator(&train, &validation, &cfg)?;
    let dir = ctx.artifact("generator");
    generator.save(&dir)?;
    let mut metrics = json!({"train": train.len(), "validation": validation.len()});
    if !validation.is_empty() {
        metrics["validation_ppl"] = json!(perplexity(&generator, &generator.batches(&validation)?)?);
    }
    write_json(&dir.join("metrics.json"), &metrics)?;
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    ctx.finish("train-generator", seed, &[dir])
}

#[derive(Args)]
pub struct GenerateArgs {
    /// JSON request `{"context": [[hate, counter], ...], "query", "codes", "query_codes"}`.
    #[arg(long, conflicts_with = "query")]
    request: Option<PathBuf>,
    /// Hateful message to answer.
    #[arg(long)]
    query: Option<String>,
    /// Desired response codes, comma separated.
    #[arg(long, value_delimiter = ',')]
    codes: Vec<String>,
    /// Codes of the query, comma separated.
    #[arg(long, value_delimiter = ',')]
    query_codes: Vec<String>,
    /// Generator checkpoint; the run's own by default.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

pub fn generate(ctx: &RunContext, args: &GenerateArgs) -> Result<()> {
    ctx.prepare()?;
    let request: GenerationRequest = match (&args.request, &args.query) {
        (Some(p), _) => read_json(p)?,
        (None, Some(q)) => GenerationRequest {
            context: Vec::new(),
            query: q.clone(),
            codes: args.codes.clone(),
            query_codes: args.query_codes.clone(),
        },
        (None, None) => return Err(counterarg_core::Error::Config("pass --request or --query".into()).into()),
    };
    parse_feature_set(&request.codes)?;
    let dir = args.checkpoint.clone().unwrap_or_else(|| ctx.artifact("generator"));
    let generator = Generator::load(&dir).with_context(|| format!("loading generator from {}", dir.display()))?;
    let response = generator.respond(&request)?;
    let out = ctx.artifact("generate/response.json");
    write_json(&out, &json!({"request": request, "response": response}))?;
    println!("{}", response.response);
    ctx.finish("generate", generator.config().train.seed, &[out])
}

#[derive(Args)]
pub struct GridArgs {
    /// Rows by id or family list (`1,8` or `baseline,argSch+big5`); overrides grid.rows.
    #[arg(long)]
    rows: Option<String>,
}

pub fn eval_grid(ctx: &RunContext, args: &GridArgs, force: bool) -> Result<()> {
    let rows_spec = args.rows.clone().unwrap_or_else(|| ctx.config.grid.rows.clone());
    let stage = format!("eval-grid[{rows_spec}]");
    if ctx.skip(&stage, force)? {
        return Ok(());
    }
    let rows = select_rows(&rows_spec)?;
    let cfg = ctx.config.grid_config();
    let dir = ctx.artifact("grid");
    let reports = run_feature_grid(&load_annotated(ctx)?, &rows, &cfg, Some(&dir))?;
    println!("{:>3}  {:<11} {:<28} {:>7} {:>7} {:>8}", "ID", "Type", "Features", "BLEU", "RougeL", "PPL");
    for r in &reports {
        match &r.error {
            None => println!(
                "{:>3}  {:<11} {:<28} {:>7.2} {:>7.2} {:>8.2}",
                r.id, r.kind, r.features, r.bleu, r.rouge_l, r.ppl
            ),
            Some(e) => println!("{:>3}  {:<11} {:<28} failed: {e}", r.id, r.kind, r.features),
        }
    }
    let failed = reports.iter().filter(|r| r.failed()).count();
    ctx.finish(&stage, cfg.split_seed, &[dir.join("grid.csv")])?;
    if failed == reports.len() {
        bail!("every grid row failed");
    }
    Ok(())
}

pub fn report(ctx: &RunContext) -> Result<()> {
    ctx.prepare()?;
    let annotated = load_annotated(ctx)?;
    let rows = feature_distribution_report(&annotated)?;
    let out = ctx.artifact("report/distribution.csv");
    write_distribution_csv(&rows, &out)?;
    let mut text = String::from("family   code                              side     count  share\n");
    for r in &rows {
        text.push_str(&format!(
            "{:<8} {:<33} {:<8} {:>5}  {:.3}\n",
            r.family.as_str(),
            r.code.name(),
            format!("{:?}", r.side).to_lowercase(),
            r.count,
            r.proportion
        ));
    }
    let grid_csv = ctx.artifact("grid/grid.csv");
    if grid_csv.exists() {
        text.push('\n');
        text.push_str(&std::fs::read_to_string(&grid_csv)?);
    }
    let summary = ctx.artifact("report/summary.txt");
    counterarg_core::artifact::write_text(&summary, &text)?;
    print!("{text}");
    ctx.finish("report", ctx.config.seed, &[out, summary])
}

#[derive(Args)]
pub struct HumevalArgs {
    /// Generations sampled per eligible variant; overrides humeval.sample_size.
    #[arg(long)]
    sample_size: Option<usize>,
}

pub fn export_humeval(ctx: &RunContext, args: &HumevalArgs) -> Result<()> {
    ctx.prepare()?;
    let grid = ctx.artifact("grid");
    let mut reports = Vec::new();
    let mut generations = BTreeMap::new();
    let entries = std::fs::read_dir(&grid).with_context(|| format!("{} is missing; run `eval-grid` first", grid.display()))?;
    for entry in entries {
        let dir = entry?.path();
        let metrics = dir.join("metrics.json");
        if !metrics.exists() {
            continue;
        }
        let report: MetricReport = read_json(&metrics)?;
        let gens: Vec<GenerationRecord> = read_jsonl(&dir.join("generations.jsonl"))?;
        generations.insert(report.id, gens);
        reports.push(report);
    }
    if reports.is_empty() {
        return Err(anyhow!("no row results under {}", grid.display()));
    }
    reports.sort_by_key(|r| r.id);
    let seed = ctx.config.stage_seed("humeval");
    let size = args.sample_size.unwrap_or(ctx.config.humeval.sample_size);
    let out = ctx.artifact("humeval");
    let packet = export_human_eval_packets(&reports, &generations, size, seed, &out)?;
    println!("{} rows over {} blinded variants in {}", packet.rows.len(), packet.key.len(), out.display());
    ctx.finish("export-humeval", seed, &[out])
}
