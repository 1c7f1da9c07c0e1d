use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::macro_f1;
use super::polarity::apply_thresholds;
use crate::error::{Error, Result};

/// Grid resolution: thresholds are multiples of `1 / GRID_STEPS_PER_UNIT`.
pub const GRID_STEPS_PER_UNIT: usize = 20;

/// `-1, -0.95, ..., 1`.
pub fn threshold_grid() -> Vec<f64> {
    let n = 2 * GRID_STEPS_PER_UNIT;
    (0..=n).map(|i| i as f64 / GRID_STEPS_PER_UNIT as f64 - 1.0).collect()
}

fn three_class_f1(scores: &[f64], gold: &[usize], t1: f64, t2: f64) -> f64 {
    let pred: Vec<usize> = scores
        .iter()
        .map(|&g| apply_thresholds(g, t1, t2).expect("ordered thresholds"))
        .collect();
    macro_f1(&pred, gold, 3)
}

/// Whether candidate `a` beats `b`: higher macro-F1, then smaller
/// `|t1| + |t2|`, then smaller `t1`, then smaller `t2`.
fn better(a: (f64, f64, f64), b: (f64, f64, f64)) -> bool {
    if a.2 != b.2 {
        return a.2 > b.2;
    }
    let (sa, sb) = (a.0.abs() + a.1.abs(), b.0.abs() + b.1.abs());
    if (sa - sb).abs() > 1e-12 {
        return sa < sb;
    }
    (a.0, a.1) < (b.0, b.1)
}

/// Best `(t1, t2, macro-F1)` over all ordered grid pairs.
pub fn best_thresholds(scores: &[f64], gold: &[usize], grid: &[f64]) -> Result<(f64, f64, f64)> {
    if scores.is_empty() || scores.len() != gold.len() || grid.is_empty() {
        return Err(Error::invalid("threshold search needs scores, matching labels and a grid"));
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for (i, &t1) in grid.iter().enumerate() {
        for &t2 in &grid[i..] {
            let cand = (t1, t2, three_class_f1(scores, gold, t1, t2));
            if best.is_none_or(|b| better(cand, b)) {
                best = Some(cand);
            }
        }
    }
    Ok(best.expect("non-empty grid"))
}

/// Seeded assignment of `n` items to `folds` folds of near-equal size.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || n < folds {
        return Err(Error::invalid(format!("cannot split {n} items into {folds} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n];
    for (pos, &item) in order.iter().enumerate() {
        assignment[item] = pos % folds;
    }
    Ok(assignment)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldThresholds {
    pub fold: usize,
    pub t1: f64,
    pub t2: f64,
    pub train_macro_f1: f64,
    pub test_macro_f1: f64,
    pub test_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvThresholds {
    pub folds: Vec<FoldThresholds>,
    pub mean_macro_f1: f64,
}

/// Tunes thresholds on all folds but one and scores the held-out fold, for
/// every fold; reports the mean held-out macro-F1.
pub fn search_thresholds_cv(
    scores: &[f64],
    gold: &[usize],
    assignment: &[usize],
    folds: usize,
    grid: &[f64],
) -> Result<CvThresholds> {
    if scores.len() != gold.len() || scores.len() != assignment.len() {
        return Err(Error::invalid("scores, labels and fold assignment differ in length"));
    }
    if gold.iter().any(|&g| g > 2) {
        return Err(Error::invalid("three-class gold labels must be 0, 1 or 2"));
    }
    let mut out = Vec::with_capacity(folds);
    for k in 0..folds {
        let (mut tr_s, mut tr_g, mut te_s, mut te_g) = (vec![], vec![], vec![], vec![]);
        for i in 0..scores.len() {
            if assignment[i] == k {
                te_s.push(scores[i]);
                te_g.push(gold[i]);
            } else {
                tr_s.push(scores[i]);
                tr_g.push(gold[i]);
            }
        }
        if te_s.is_empty() || tr_s.is_empty() {
            return Err(Error::invalid(format!("fold {k} is empty")));
        }
        let (t1, t2, train_f1) = best_thresholds(&tr_s, &tr_g, grid)?;
        out.push(FoldThresholds {
            fold: k,
            t1,
            t2,
            train_macro_f1: train_f1,
            test_macro_f1: three_class_f1(&te_s, &te_g, t1, t2),
            test_size: te_s.len(),
        });
    }
    let mean = out.iter().map(|f| f.test_macro_f1).sum::<f64>() / folds as f64;
    Ok(CvThresholds {
        folds: out,
        mean_macro_f1: mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{NEGATIVE, NEUTRAL, POSITIVE};

    #[test]
    fn grid_shape() {
        let g = threshold_grid();
        assert_eq!(g.len(), 41);
        assert_eq!(g[0], -1.0);
        assert_eq!(g[20], 0.0);
        assert_eq!(g[40], 1.0);
    }

    #[test]
    fn separated_scores_are_perfect() {
        let scores: Vec<f64> = (0..30).map(|i| [-0.8, 0.0, 0.8][i % 3]).collect();
        let gold: Vec<usize> = (0..30).map(|i| [NEGATIVE, NEUTRAL, POSITIVE][i % 3]).collect();
        // One item of each class per fold.
        let assign: Vec<usize> = (0..30).map(|i| i / 3).collect();
        let cv = search_thresholds_cv(&scores, &gold, &assign, 10, &threshold_grid()).unwrap();
        assert_eq!(cv.mean_macro_f1, 1.0);
        assert_eq!(cv.folds.len(), 10);
    }

    #[test]
    fn all_neutral_gold_with_widest_thresholds() {
        let pred: Vec<usize> = [0.3, -0.2, 0.9]
            .iter()
            .map(|&g| apply_thresholds(g, -1.0, 1.0).unwrap())
            .collect();
        assert_eq!(macro_f1(&pred, &[NEUTRAL; 3], 3), 1.0 / 3.0);
    }

    #[test]
    fn tie_break_prefers_small_thresholds() {
        // Any t1 in (-0.5, 0] and t2 in [0, 0.5) separate perfectly.
        let scores = [-0.5, 0.0, 0.5];
        let gold = [NEGATIVE, NEUTRAL, POSITIVE];
        let (t1, t2, f1) = best_thresholds(&scores, &gold, &threshold_grid()).unwrap();
        assert_eq!(f1, 1.0);
        assert!(t1 == 0.0 && t2 == 0.0, "{t1} {t2}");
    }

    #[test]
    fn fold_errors() {
        assert!(fold_assignment(5, 10, 0).is_err());
        let assign = vec![0, 0, 0];
        assert!(search_thresholds_cv(&[0.0; 3], &[1; 3], &assign, 2, &threshold_grid()).is_err());
    }
}
