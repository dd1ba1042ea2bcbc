//! Blinded rating packets for human evaluation of grid variants.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::grid::{GenerationRecord, MetricReport};
use crate::artifact::{ensure_dir, write_json, write_text};
use crate::error::{Error, Result};
use crate::rng::derived;

/// Rating columns per annotator, with the scale in the header.
pub const RATING_FIELDS: [&str; 3] = ["arg_1to5", "flu_0or1", "hal_0or1"];
pub const ANNOTATORS: usize = 2;

pub const LEGEND: &str = "\
arg_1to5: argumentativeness. 1 = no argument against the hateful message, 5 = a clear, well supported counter-argument.
flu_0or1: fluency. 1 = grammatical and readable, 0 = otherwise.
hal_0or1: hallucination. 1 = states content unsupported by or unrelated to the dialogue, 0 = otherwise.
";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRow {
    pub item_id: String,
    pub blinded_variant: String,
    pub context: String,
    pub response: String,
}

/// Rows plus the mapping from blinded id to grid row id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HumanEvalPacket {
    pub rows: Vec<PacketRow>,
    pub key: BTreeMap<String, usize>,
}

/// Variants whose BLEU beats the baseline row (the row with no families).
pub fn eligible_variants(reports: &[MetricReport]) -> Result<Vec<&MetricReport>> {
    let baseline = reports
        .iter()
        .find(|r| r.families.is_empty() && !r.failed())
        .ok_or_else(|| Error::State("no successful baseline row to compare against".into()))?;
    Ok(reports
        .iter()
        .filter(|r| !r.families.is_empty() && !r.failed() && r.bleu > baseline.bleu)
        .collect())
}

/// Samples `sample_size` generations per eligible variant. Variant ids are
/// replaced by `V01`, `V02`, ... in a seed-dependent order.
pub fn build_human_eval_packet(
    reports: &[MetricReport],
    generations: &BTreeMap<usize, Vec<GenerationRecord>>,
    sample_size: usize,
    seed: u64,
) -> Result<HumanEvalPacket> {
    let mut eligible: Vec<usize> = eligible_variants(reports)?.iter().map(|r| r.id).collect();
    eligible.shuffle(&mut derived(seed, "humeval-blinding"));
    let mut rows = Vec::new();
    let mut key = BTreeMap::new();
    for (i, id) in eligible.iter().enumerate() {
        let blind = format!("V{:02}", i + 1);
        key.insert(blind.clone(), *id);
        let gens = generations.get(id).map(Vec::as_slice).unwrap_or(&[]);
        if sample_size > gens.len() {
            log::warn!(
                "variant {blind}: {} generations available, sample size {sample_size} capped",
                gens.len()
            );
        }
        let mut idx: Vec<usize> = (0..gens.len()).collect();
        idx.shuffle(&mut derived(seed, &format!("humeval-sample-{id}")));
        idx.truncate(sample_size);
        idx.sort_unstable();
        rows.extend(idx.into_iter().map(|j| PacketRow {
            item_id: gens[j].item_id.clone(),
            blinded_variant: blind.clone(),
            context: gens[j].context.clone(),
            response: gens[j].response.clone(),
        }));
    }
    let mut order = derived(seed, "humeval-order");
    rows.shuffle(&mut order);
    Ok(HumanEvalPacket { rows, key })
}

pub fn packet_header() -> Vec<String> {
    let mut h: Vec<String> = ["item_id", "blinded_variant", "context", "response"].map(String::from).to_vec();
    for a in 1..=ANNOTATORS {
        h.extend(RATING_FIELDS.iter().map(|f| format!("a{a}_{f}")));
    }
    h
}

/// Writes `packet.csv`, `legend.txt` and the unblinding `key.json` into
/// `dir`. Returns the packet path.
pub fn write_human_eval_packet(packet: &HumanEvalPacket, dir: &Path) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join("packet.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let header = packet_header();
    w.write_record(&header)?;
    for r in &packet.rows {
        let mut rec = vec![r.item_id.clone(), r.blinded_variant.clone(), r.context.clone(), r.response.clone()];
        rec.resize(header.len(), String::new());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_text(&dir.join("legend.txt"), LEGEND)?;
    write_json(&dir.join("key.json"), &packet.key)?;
    Ok(path)
}

/// Builds and writes a packet in one step.
pub fn export_human_eval_packets(
    reports: &[MetricReport],
    generations: &BTreeMap<usize, Vec<GenerationRecord>>,
    sample_size: usize,
    seed: u64,
    dir: &Path,
) -> Result<HumanEvalPacket> {
    let packet = build_human_eval_packet(reports, generations, sample_size, seed)?;
    write_human_eval_packet(&packet, dir)?;
    Ok(packet)
}
