//! Uniform, softmax and sigmoid aggregation on the same synthetic corpus,
//! scored with the three-class gated polarity protocol.

use segmil::cli::pipeline::{fit, scored_items};
use segmil::cli::{ModelKind, RunConfig};
use segmil::corpus::{generate_synthetic, SegmentLabelSpace, SyntheticSpec};
use segmil::evaluation::three_class_report;

fn main() -> segmil::error::Result<()> {
    let data = generate_synthetic(&SyntheticSpec {
        train_reviews: 600,
        validation_reviews: 100,
        test_reviews: 150,
        ..SyntheticSpec::default()
    })?;

    let mut config = RunConfig::default();
    config.data.segment_labels = SegmentLabelSpace::Polarity;
    config.model.embed_dim = 16;
    config.model.cnn.feature_maps = 8;
    config.model.gru_hidden = 8;
    config.model.attention_dim = 8;
    config.train.max_epochs = 10;
    config.train.patience = 3;
    config.train.batch_size = 50;
    config.train.optimizer.learning_rate = 1.0;

    for kind in [ModelKind::MilAvg, ModelKind::MilSoftmax, ModelKind::MilSigmoid] {
        let fitted = fit(kind, &config, &data.train, &data.validation)?;
        let scores = fitted.score_corpus(&data.test)?;
        let (_, segments) = scored_items(&data.test, &scores);
        let report = three_class_report(&segments, 2, 10, 0)?;
        println!("{:<12} segment macro-F1 {:.3}", kind.name(), report.mean_macro_f1);
    }
    Ok(())
}
