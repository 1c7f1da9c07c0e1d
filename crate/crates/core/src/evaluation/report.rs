use serde::{Deserialize, Serialize};

use super::bootstrap::bootstrap_ci;
use super::metrics::{accuracy, aupr, prf_weighted, PrPoint, Prf};
use super::polarity::{gate, polarity_score, PolarityMap};
use super::thresholds::{fold_assignment, search_thresholds_cv, threshold_grid, CvThresholds};
use crate::diffcore::argmax;
use crate::error::{Error, Result};

/// A segment's class distribution, its aggregation weight and gold label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSegment {
    pub probs: Vec<f64>,
    pub attention: f64,
    pub gold: usize,
}

/// A review's class distribution, gold label and sample weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredReview {
    pub probs: Vec<f64>,
    pub gold: usize,
    pub sample_weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThreeClassReport {
    pub segments: usize,
    pub folds: usize,
    pub mean_macro_f1: f64,
    pub cv: CvThresholds,
}

/// Gated polarity scores `α · Σ_c p^c w^c`.
pub fn gated_scores(segments: &[ScoredSegment], map: &PolarityMap) -> Vec<f64> {
    segments
        .iter()
        .map(|s| gate(polarity_score(&s.probs, map), s.attention))
        .collect()
}

/// Three-class segment evaluation: gated polarity scores, thresholds tuned
/// by `folds`-fold cross-validation over the segments.
pub fn three_class_report(
    segments: &[ScoredSegment],
    num_classes: usize,
    folds: usize,
    seed: u64,
) -> Result<ThreeClassReport> {
    let map = PolarityMap::new(num_classes)?;
    if let Some(s) = segments.iter().find(|s| s.probs.len() != num_classes) {
        return Err(Error::invalid(format!(
            "segment distribution has {} classes, expected {num_classes}",
            s.probs.len()
        )));
    }
    let scores = gated_scores(segments, &map);
    let gold: Vec<usize> = segments.iter().map(|s| s.gold).collect();
    let assignment = fold_assignment(segments.len(), folds, seed)?;
    let cv = search_thresholds_cv(&scores, &gold, &assignment, folds, &threshold_grid())?;
    Ok(ThreeClassReport {
        segments: segments.len(),
        folds,
        mean_macro_f1: cv.mean_macro_f1,
        cv,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub low: f64,
    pub high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub items: usize,
    pub prf: Prf,
    pub accuracy: f64,
    /// Absent when the gold labels hold a single class.
    pub aupr: Option<f64>,
    pub f1_ci: Option<ConfidenceInterval>,
    pub aupr_ci: Option<ConfidenceInterval>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryReport {
    pub positive: usize,
    /// Review-level cut on `p_positive`; argmax decisions when absent.
    pub review_threshold: Option<f64>,
    /// Absent for models without review-level output.
    pub review: Option<LevelMetrics>,
    pub segment: Option<LevelMetrics>,
}

/// Bootstrap settings: iterations and seed; resamples hold
/// `resample_size` items.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub iterations: usize,
    pub resample_size: usize,
    pub seed: u64,
}

fn level_metrics(
    pred: &[usize],
    gold: &[usize],
    weights: &[f64],
    scores: &[f64],
    positive: usize,
    bootstrap: Option<BootstrapConfig>,
) -> Result<LevelMetrics> {
    let is_pos: Vec<bool> = gold.iter().map(|&g| g == positive).collect();
    let area = aupr(scores, &is_pos).ok();
    let (mut f1_ci, mut aupr_ci) = (None, None);
    if let Some(b) = bootstrap {
        let f1 = |idx: &[usize]| {
            let p: Vec<usize> = idx.iter().map(|&i| pred[i]).collect();
            let g: Vec<usize> = idx.iter().map(|&i| gold[i]).collect();
            let w: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
            Some(prf_weighted(&p, &g, &w, positive).f1)
        };
        let (low, high) = bootstrap_ci(pred.len(), b.resample_size, b.iterations, b.seed, f1)?;
        f1_ci = Some(ConfidenceInterval { low, high });
        if area.is_some() {
            let area_of = |idx: &[usize]| {
                let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
                let g: Vec<bool> = idx.iter().map(|&i| is_pos[i]).collect();
                aupr(&s, &g).ok()
            };
            let (low, high) = bootstrap_ci(pred.len(), b.resample_size, b.iterations, b.seed, area_of)?;
            aupr_ci = Some(ConfidenceInterval { low, high });
        }
    }
    Ok(LevelMetrics {
        items: pred.len(),
        prf: prf_weighted(pred, gold, weights, positive),
        accuracy: accuracy(pred, gold),
        aupr: area,
        f1_ci,
        aupr_ci,
    })
}

/// Binary evaluation of `positive` against the rest.
///
/// Reviews are labeled by argmax and scored by `p_positive`, weighted by
/// their sample weights. Segments are labeled by argmax of their own
/// distribution and scored by `p_positive · α`, unweighted.
pub fn binary_report(
    reviews: &[ScoredReview],
    segments: &[ScoredSegment],
    positive: usize,
    bootstrap: Option<BootstrapConfig>,
) -> Result<BinaryReport> {
    binary_report_at(reviews, segments, positive, None, bootstrap)
}

/// Review decision: `positive` when `p_positive >= threshold`, otherwise
/// the most probable other class. Plain argmax without a threshold.
pub fn review_decision(probs: &[f64], positive: usize, threshold: Option<f64>) -> usize {
    match threshold {
        None => argmax(probs),
        Some(t) if probs[positive] >= t => positive,
        Some(_) => (0..probs.len())
            .filter(|&c| c != positive)
            .max_by(|&a, &b| probs[a].total_cmp(&probs[b]).then(b.cmp(&a)))
            .unwrap_or(positive),
    }
}

/// The cut on `p_positive` with the best weighted F1 over `reviews`;
/// candidates are the distinct scores, ties go to the cut nearest 0.5.
pub fn tune_review_threshold(reviews: &[ScoredReview], positive: usize) -> Result<f64> {
    if reviews.is_empty() {
        return Err(Error::invalid("threshold tuning over no reviews"));
    }
    let gold: Vec<usize> = reviews.iter().map(|r| r.gold).collect();
    let weights: Vec<f64> = reviews.iter().map(|r| r.sample_weight).collect();
    let mut cuts: Vec<f64> = reviews.iter().map(|r| r.probs[positive]).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut best: (f64, f64) = (f64::NEG_INFINITY, 0.5);
    for t in cuts {
        let pred: Vec<usize> = reviews.iter().map(|r| review_decision(&r.probs, positive, Some(t))).collect();
        let f1 = prf_weighted(&pred, &gold, &weights, positive).f1;
        if f1 > best.0 || (f1 == best.0 && (t - 0.5).abs() < (best.1 - 0.5).abs()) {
            best = (f1, t);
        }
    }
    Ok(best.1)
}

/// [`binary_report`] with an optional review-level threshold.
pub fn binary_report_at(
    reviews: &[ScoredReview],
    segments: &[ScoredSegment],
    positive: usize,
    review_threshold: Option<f64>,
    bootstrap: Option<BootstrapConfig>,
) -> Result<BinaryReport> {
    if reviews.is_empty() && segments.is_empty() {
        return Err(Error::invalid("binary report over no items"));
    }
    let review = if reviews.is_empty() {
        None
    } else {
        let pred: Vec<usize> = reviews
            .iter()
            .map(|r| review_decision(&r.probs, positive, review_threshold))
            .collect();
        let gold: Vec<usize> = reviews.iter().map(|r| r.gold).collect();
        let weights: Vec<f64> = reviews.iter().map(|r| r.sample_weight).collect();
        let scores: Vec<f64> = reviews.iter().map(|r| r.probs[positive]).collect();
        Some(level_metrics(&pred, &gold, &weights, &scores, positive, bootstrap)?)
    };
    let segment = if segments.is_empty() {
        None
    } else {
        let pred: Vec<usize> = segments.iter().map(|s| argmax(&s.probs)).collect();
        let gold: Vec<usize> = segments.iter().map(|s| s.gold).collect();
        let weights = vec![1.0; segments.len()];
        let scores: Vec<f64> = segments.iter().map(|s| s.probs[positive] * s.attention).collect();
        Some(level_metrics(&pred, &gold, &weights, &scores, positive, bootstrap)?)
    };
    Ok(BinaryReport {
        positive,
        review_threshold,
        review,
        segment,
    })
}

/// `threshold,precision,recall` rows with a header.
pub fn pr_curve_csv(points: &[PrPoint]) -> String {
    let mut out = String::from("threshold,precision,recall\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.precision, p.recall));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{NEGATIVE, NEUTRAL, POSITIVE};

    fn seg(probs: &[f64], attention: f64, gold: usize) -> ScoredSegment {
        ScoredSegment {
            probs: probs.to_vec(),
            attention,
            gold,
        }
    }

    #[test]
    fn gated_scores_example() {
        let map = PolarityMap::new(5).unwrap();
        let s = gated_scores(&[seg(&[0.0, 0.0, 0.0, 0.0, 1.0], 0.5, POSITIVE)], &map);
        assert_eq!(s, vec![0.5]);
    }

    #[test]
    fn separable_segments_score_perfectly() {
        let mut segs = Vec::new();
        for i in 0..30 {
            let a = 0.2 + 0.02 * i as f64;
            segs.push(seg(&[0.9, 0.1], a, NEGATIVE));
            segs.push(seg(&[0.1, 0.9], a, POSITIVE));
            segs.push(seg(&[0.5, 0.5], a, NEUTRAL));
        }
        let r = three_class_report(&segs, 2, 10, 3).unwrap();
        assert_eq!(r.cv.folds.len(), 10);
        assert!((r.mean_macro_f1 - 1.0).abs() < 1e-12, "{}", r.mean_macro_f1);
    }

    #[test]
    fn binary_report_counts() {
        let reviews = vec![
            ScoredReview { probs: vec![0.2, 0.8], gold: 1, sample_weight: 2.0 },
            ScoredReview { probs: vec![0.6, 0.4], gold: 1, sample_weight: 1.0 },
            ScoredReview { probs: vec![0.3, 0.7], gold: 0, sample_weight: 1.0 },
            ScoredReview { probs: vec![0.9, 0.1], gold: 0, sample_weight: 1.0 },
        ];
        let r = binary_report(&reviews, &[], 1, None).unwrap();
        assert!((r.review.as_ref().unwrap().prf.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.review.as_ref().unwrap().prf.recall - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.review.as_ref().unwrap().accuracy, 0.5);
        // Ranking 0.8+, 0.7-, 0.4+, 0.1-: AUPR = 0.5 * 1 + 0.5 * 2/3.
        assert!((r.review.as_ref().unwrap().aupr.unwrap() - (0.5 + 1.0 / 3.0)).abs() < 1e-12);
        assert!(r.segment.is_none());
    }

    #[test]
    fn segment_scores_are_gated() {
        let reviews = vec![ScoredReview { probs: vec![0.5, 0.5], gold: 1, sample_weight: 1.0 }];
        // High p_pos but tiny weight ranks below a gated witness.
        let segs = vec![seg(&[0.1, 0.9], 0.01, 0), seg(&[0.4, 0.6], 0.9, 1)];
        let r = binary_report(&reviews, &segs, 1, None).unwrap();
        assert_eq!(r.segment.unwrap().aupr, Some(1.0));
        assert_eq!(r.review.as_ref().unwrap().aupr, None);
    }

    #[test]
    fn bootstrap_interval_brackets_point() {
        let reviews: Vec<ScoredReview> = (0..60)
            .map(|i| ScoredReview {
                probs: if i % 3 == 0 { vec![0.7, 0.3] } else { vec![0.2, 0.8] },
                gold: (i % 2) as usize,
                sample_weight: 1.0,
            })
            .collect();
        let b = BootstrapConfig { iterations: 200, resample_size: 1000, seed: 9 };
        let r = binary_report(&reviews, &[], 1, Some(b)).unwrap();
        let ci = r.review.as_ref().unwrap().f1_ci.unwrap();
        assert!(ci.low <= r.review.as_ref().unwrap().prf.f1 && r.review.as_ref().unwrap().prf.f1 <= ci.high);
        assert_eq!(r, binary_report(&reviews, &[], 1, Some(b)).unwrap());
    }

    #[test]
    fn csv_has_header() {
        let csv = pr_curve_csv(&[PrPoint { threshold: 0.5, precision: 1.0, recall: 0.25 }]);
        assert_eq!(csv, "threshold,precision,recall\n0.5,1,0.25\n");
    }

    #[test]
    fn tuned_threshold_beats_argmax_on_shifted_scores() {
        // Positives score 0.3-0.4, negatives 0.1-0.2: argmax never says positive.
        let reviews: Vec<ScoredReview> = (0..20)
            .map(|i| {
                let gold = i % 2;
                let p = 0.1 + 0.2 * gold as f64 + (i % 5) as f64 * 0.02;
                ScoredReview { probs: vec![1.0 - p, p], gold, sample_weight: 1.0 }
            })
            .collect();
        let t = tune_review_threshold(&reviews, 1).unwrap();
        assert!(t > 0.18 && t < 0.31, "{t}");
        let tuned = binary_report_at(&reviews, &[], 1, Some(t), None).unwrap();
        assert_eq!(tuned.review.unwrap().prf.f1, 1.0);
        assert_eq!(binary_report(&reviews, &[], 1, None).unwrap().review.unwrap().prf.f1, 0.0);
    }

    #[test]
    fn decision_without_threshold_is_argmax() {
        assert_eq!(review_decision(&[0.2, 0.5, 0.3], 0, None), 1);
        assert_eq!(review_decision(&[0.2, 0.5, 0.3], 0, Some(0.2)), 0);
        assert_eq!(review_decision(&[0.2, 0.3, 0.5], 2, Some(0.6)), 1);
    }
}
