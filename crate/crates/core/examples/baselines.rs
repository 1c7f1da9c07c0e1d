//! Keyword rules, the review-level TF-IDF logistic regression and the
//! segment-supervised logistic regression on one synthetic corpus.

use segmil::baselines::{train_seg_lr, KeywordRule, RevLr, RevLrFeatures, LogRegConfig, TfidfVectorizer};
use segmil::corpus::{generate_synthetic, random_embeddings, SyntheticSpec, Vocabulary, NEUTRAL};

fn main() -> segmil::error::Result<()> {
    let data = generate_synthetic(&SyntheticSpec {
        train_reviews: 300,
        test_reviews: 100,
        ..SyntheticSpec::default()
    })?;

    println!("keyword rule on a complaint: {}", KeywordRule::Kwrd2.predict("I got food poisoning after eating here"));

    let docs: Vec<Vec<String>> = data
        .train
        .reviews
        .iter()
        .map(|r| r.segments.iter().flat_map(|s| s.tokens.clone()).collect())
        .collect();
    let labels: Vec<usize> = data.train.reviews.iter().map(|r| r.label).collect();
    let weights = vec![1.0; labels.len()];
    let (bow, _) = RevLr::fit(
        RevLrFeatures::Tfidf(TfidfVectorizer { max_n: 3, ..TfidfVectorizer::default() }),
        &docs,
        &labels,
        &weights,
        2,
        &LogRegConfig::default(),
    )?;
    let correct = data
        .test
        .reviews
        .iter()
        .filter(|r| {
            let tokens: Vec<String> = r.segments.iter().flat_map(|s| s.tokens.clone()).collect();
            let p = bow.predict(&tokens).unwrap();
            (p[1] > p[0]) as usize == r.label
        })
        .count();
    println!("rev-lr-bow review accuracy {:.3}", correct as f64 / data.test.len() as f64);

    // Seg-LR learns from segment labels, so it trains on the labeled split.
    let vocab = Vocabulary::build(&data.test, 1);
    let table = random_embeddings(&vocab, 16, 0)?;
    let seg = train_seg_lr(&data.test, &vocab, &table, &LogRegConfig::default())?;
    println!(
        "seg-lr: {} segment classes, {} features (neutral is class {NEUTRAL})",
        seg.weights.shape()[0],
        seg.weights.shape()[1]
    );
    Ok(())
}
