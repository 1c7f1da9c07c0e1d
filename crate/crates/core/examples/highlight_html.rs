//! Train a small sigmoid-attention model and write an HTML page that
//! highlights the segments it attends to.
//!
//!     cargo run --example highlight_html -- out.html

use segmil::cli::highlight::{highlight, render_html};
use segmil::cli::pipeline::fit;
use segmil::cli::{ModelKind, RunConfig};
use segmil::corpus::{generate_synthetic, SyntheticSpec};

fn main() -> segmil::error::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "highlight.html".into());
    let data = generate_synthetic(&SyntheticSpec {
        train_reviews: 400,
        validation_reviews: 80,
        test_reviews: 5,
        ..SyntheticSpec::default()
    })?;
    let mut config = RunConfig::default();
    config.model.embed_dim = 16;
    config.model.cnn.feature_maps = 8;
    config.model.gru_hidden = 8;
    config.model.attention_dim = 8;
    config.train.max_epochs = 8;
    config.train.patience = 3;
    config.train.batch_size = 50;
    config.train.optimizer.learning_rate = 1.0;

    let fitted = fit(ModelKind::MilSigmoid, &config, &data.train, &data.validation)?;
    let reviews = highlight(&fitted, &data.test, config.highlight.threshold)?;
    std::fs::write(&path, render_html(&reviews))?;
    println!("wrote {path}");
    Ok(())
}
