//! The TOML run configuration used by the command line: parse, override,
//! print the fully resolved form.

use segmil::cli::{ModelKind, RunConfig};

const TOML: &str = r#"
seed = 7

[data]
train = "data/train.jsonl"
validation = "data/validation.jsonl"
segment_labels = "polarity"

[model]
kind = "mil-softmax"

[train]
max_epochs = 20
"#;

fn main() -> segmil::error::Result<()> {
    let mut config = RunConfig::parse(TOML)?;
    config.model.kind = "mil-sigmoid".parse::<ModelKind>().map_err(segmil::error::Error::Config)?;
    print!("{}", config.to_toml()?);

    let typo = RunConfig::parse("[train]\nmax_epoch = 3\n");
    println!("\nunknown key: {}", typo.unwrap_err());
    Ok(())
}
