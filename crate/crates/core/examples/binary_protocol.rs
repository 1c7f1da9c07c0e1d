//! Binary evaluation with bootstrap intervals and a precision-recall curve,
//! on hand-made scores.

use segmil::evaluation::{aupr, binary_report, pr_curve, pr_curve_csv, BootstrapConfig, ScoredReview};

fn main() -> segmil::error::Result<()> {
    let reviews: Vec<ScoredReview> = (0..40)
        .map(|i| {
            let gold = (i % 3 == 0) as usize;
            let p = if gold == 1 { 0.55 + (i % 7) as f64 * 0.05 } else { 0.1 + (i % 9) as f64 * 0.06 };
            ScoredReview {
                probs: vec![1.0 - p, p],
                gold,
                sample_weight: if gold == 1 { 2.0 } else { 1.0 },
            }
        })
        .collect();

    let boot = BootstrapConfig {
        iterations: 500,
        resample_size: 1000,
        seed: 0,
    };
    let report = binary_report(&reviews, &[], 1, Some(boot))?;
    println!("{}", serde_json::to_string_pretty(&report)?);

    let scores: Vec<f64> = reviews.iter().map(|r| r.probs[1]).collect();
    let gold: Vec<bool> = reviews.iter().map(|r| r.gold == 1).collect();
    println!("AUPR {:.4}", aupr(&scores, &gold)?);
    print!("{}", pr_curve_csv(&pr_curve(&scores, &gold)?));
    Ok(())
}
