//! F1 scores for multi-label detectors.

/// Binary F1 for one class; 0 when there are no predicted or gold positives.
pub fn f1(pred: &[bool], gold: &[bool]) -> f64 {
    let tp = pred.iter().zip(gold).filter(|(p, g)| **p && **g).count() as f64;
    let fp = pred.iter().zip(gold).filter(|(p, g)| **p && !**g).count() as f64;
    let fneg = pred.iter().zip(gold).filter(|(p, g)| !**p && **g).count() as f64;
    if tp == 0.0 {
        return if fp == 0.0 && fneg == 0.0 { 1.0 } else { 0.0 };
    }
    2.0 * tp / (2.0 * tp + fp + fneg)
}

/// Mean positive-class F1 over label columns. `pred[i][c]` is row i,
/// class c.
pub fn macro_f1(pred: &[Vec<bool>], gold: &[Vec<bool>]) -> f64 {
    let classes = gold.first().map_or(0, Vec::len);
    if classes == 0 {
        return 0.0;
    }
    let total: f64 = (0..classes)
        .map(|c| {
            let p: Vec<bool> = pred.iter().map(|r| r[c]).collect();
            let g: Vec<bool> = gold.iter().map(|r| r[c]).collect();
            f1(&p, &g)
        })
        .sum();
    total / classes as f64
}
