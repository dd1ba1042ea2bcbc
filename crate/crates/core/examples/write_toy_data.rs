//! Writes the bundled toy inputs: dialogues, value arguments, argument-type
//! pairs and per-family baseline training texts.
//!
//! `cargo run -p counterarg-core --example write_toy_data -- data/toy`

use std::path::PathBuf;

use counterarg_core::annotator::LabeledText;
use counterarg_core::artifact::write_jsonl;
use counterarg_core::features::FeatureFamily;
use counterarg_core::synthetic::{argtype_pairs, dialogue_corpus, feature_corpus, value_arguments};
use counterarg_core::taxonomy::ValueTaxonomy;

fn main() -> counterarg_core::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/toy".into()));
    dialogue_corpus(60, 3, 11).save_jsonl(&dir.join("dialogues.jsonl"))?;
    write_jsonl(&dir.join("value_arguments.jsonl"), &value_arguments(&ValueTaxonomy::toy(), 240, false, 12))?;
    write_jsonl(&dir.join("argtype_pairs.jsonl"), &argtype_pairs(360, 13))?;
    let labeled = feature_corpus(120, 2, 14);
    for (family, name) in [(FeatureFamily::Big5, "big5"), (FeatureFamily::ArgSch, "argsch")] {
        let rows: Vec<LabeledText> = labeled
            .turns()
            .filter_map(|(_, t)| {
                let code = t.hate_features.iter().find(|c| c.family() == family)?;
                Some(LabeledText {
                    text: t.hate_text.clone(),
                    label: code.name().to_string(),
                })
            })
            .collect();
        write_jsonl(&dir.join(format!("{name}_texts.jsonl")), &rows)?;
    }
    println!("wrote toy data to {}", dir.display());
    Ok(())
}
