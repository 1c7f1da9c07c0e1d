//! Train the sigmoid-attention MIL model on review labels only, then read
//! off per-segment predictions and attention weights.

use segmil::corpus::{generate_synthetic, SyntheticSpec, Vocabulary};
use segmil::diffcore::AdadeltaConfig;
use segmil::encoders::CnnConfig;
use segmil::milnet::{predict_segments, AggregationKind, MilNet, MilSpec};
use segmil::training::{train, TrainConfig};

fn main() -> segmil::error::Result<()> {
    let data = generate_synthetic(&SyntheticSpec {
        train_reviews: 400,
        validation_reviews: 100,
        test_reviews: 20,
        ..SyntheticSpec::default()
    })?;
    let vocab = Vocabulary::build(&data.train, 1);

    let spec = MilSpec {
        num_classes: 2,
        vocab_size: vocab.len(),
        embed_dim: 16,
        cnn: CnnConfig {
            feature_maps: 8,
            ..CnnConfig::default()
        },
        gru_hidden: 8,
        attention_dim: 8,
        aggregation: AggregationKind::SigmoidAttention,
        ..MilSpec::default()
    };
    let mut model = MilNet::new(spec, None, 1)?;
    let config = TrainConfig {
        max_epochs: 8,
        patience: 3,
        batch_size: 50,
        optimizer: AdadeltaConfig {
            learning_rate: 1.0,
            ..AdadeltaConfig::default()
        },
        ..TrainConfig::default()
    };
    let outcome = train(&mut model, &vocab.index_corpus(&data.train), &vocab.index_corpus(&data.validation), &config)?;
    for e in &outcome.epochs {
        println!(
            "epoch {:>2}  train {:.4}  val {:.4}  val macro-F1 {:.3}",
            e.epoch, e.train_loss, e.val_loss, e.val_macro_f1
        );
    }

    let review = &data.test.reviews[0];
    let pred = model.predict(&vocab.index_review(review).segments)?;
    println!("\nreview label {}, predicted {}", review.label, pred.label());
    for (seg, s) in review.segments.iter().zip(predict_segments(&pred)) {
        println!("  class {} weight {:.2} gold {:?}  {}", s.label, s.weight, seg.gold_label, seg.raw_text);
    }
    Ok(())
}
