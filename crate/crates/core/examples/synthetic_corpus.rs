//! Generate a synthetic corpus with planted witness segments and check its
//! witness rate.
//!
//!     cargo run --example synthetic_corpus -- 0.4

use segmil::corpus::{corpus_stats, generate_synthetic, SyntheticSpec};

fn main() -> segmil::error::Result<()> {
    let wr: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.25);
    let spec = SyntheticSpec {
        witness_rate: wr,
        train_reviews: 200,
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec)?;

    let review = &data.test.reviews[0];
    println!("review {} (label {}):", review.id, review.label);
    for s in &review.segments {
        println!("  [{}] {}", s.gold_label.unwrap(), s.raw_text);
    }

    // Training reviews carry no segment labels; the test split does.
    let stats = corpus_stats(&data.test)?;
    for (class, c) in &stats.classes {
        println!("class {class}: {} reviews, witness rate {:.3}", c.reviews, c.witness_rate);
    }
    Ok(())
}
