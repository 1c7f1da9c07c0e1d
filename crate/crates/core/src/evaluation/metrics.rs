use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Precision, recall and F1 for one class. `undefined` is set when a
/// denominator was zero and the affected value was reported as 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub undefined: bool,
}

fn prf_from_counts(tp: f64, fp: f64, fn_: f64) -> Prf {
    let mut undefined = false;
    let mut ratio = |num: f64, den: f64| {
        if den > 0.0 {
            num / den
        } else {
            undefined = true;
            0.0
        }
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    Prf {
        precision,
        recall,
        f1,
        undefined,
    }
}

/// Sample-weighted P/R/F1 of `positive` against the rest.
pub fn prf_weighted(pred: &[usize], gold: &[usize], weights: &[f64], positive: usize) -> Prf {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for ((&p, &g), &w) in pred.iter().zip(gold).zip(weights) {
        match (p == positive, g == positive) {
            (true, true) => tp += w,
            (true, false) => fp += w,
            (false, true) => fn_ += w,
            (false, false) => {}
        }
    }
    prf_from_counts(tp, fp, fn_)
}

/// Unweighted F1 per class; a class that never occurs in `gold` or `pred`
/// gets 0.
pub fn f1_per_class(pred: &[usize], gold: &[usize], classes: usize) -> Vec<f64> {
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    for (&p, &g) in pred.iter().zip(gold) {
        if p == g {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[g] += 1;
        }
    }
    (0..classes)
        .map(|c| {
            let den = 2 * tp[c] + fp[c] + fn_[c];
            if den == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / den as f64
            }
        })
        .collect()
}

/// Mean over all `classes`; a class absent from both `gold` and `pred`
/// contributes 0.
pub fn macro_f1(pred: &[usize], gold: &[usize], classes: usize) -> f64 {
    f1_per_class(pred, gold, classes).iter().sum::<f64>() / classes as f64
}

pub fn accuracy(pred: &[usize], gold: &[usize]) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    pred.iter().zip(gold).filter(|(p, g)| p == g).count() as f64 / gold.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// One point per distinct score, cutting after all items tied at it.
pub fn pr_curve(scores: &[f64], gold: &[bool]) -> Result<Vec<PrPoint>> {
    let positives = gold.iter().filter(|&&g| g).count();
    if positives == 0 || positives == gold.len() {
        return Err(Error::invalid("precision-recall needs both classes in the gold labels"));
    }
    if scores.len() != gold.len() || scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores must be finite and match the labels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            tp += gold[order[i]] as usize;
            seen += 1;
            i += 1;
        }
        points.push(PrPoint {
            threshold: s,
            precision: tp as f64 / seen as f64,
            recall: tp as f64 / positives as f64,
        });
    }
    Ok(points)
}

/// Step-wise area: `Σ (R_k - R_{k-1}) P_k` over the curve's cut points.
pub fn aupr(scores: &[f64], gold: &[bool]) -> Result<f64> {
    let mut prev = 0.0;
    let mut area = 0.0;
    for p in pr_curve(scores, gold)? {
        area += (p.recall - prev) * p.precision;
        prev = p.recall;
    }
    Ok(area)
}
