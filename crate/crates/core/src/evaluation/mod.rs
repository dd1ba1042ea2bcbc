//! Automatic metrics, the feature-combination grid and human-eval packets.

mod grid;
mod humeval;
mod metrics;

pub use grid::{
    feature_grid, generate_test_set, run_feature_grid, run_row, select_rows, write_grid_csv, GenerationRecord,
    GridConfig, GridRow, GridSplit, MetricReport,
};
pub use humeval::{
    build_human_eval_packet, eligible_variants, export_human_eval_packets, packet_header, write_human_eval_packet,
    HumanEvalPacket, PacketRow, ANNOTATORS, LEGEND, RATING_FIELDS,
};
pub use metrics::{corpus_bleu, lcs_len, mean_rouge_l, perplexity, rouge_l, sentence_bleu_add_one, BleuStats, TokenScorer};
