use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{LogRegConfig, RevEncoder, RevSpec};
use crate::corpus::{SegmentLabelSpace, SyntheticSpec};
use crate::encoders::CnnConfig;
use crate::error::{Error, Result};
use crate::milnet::{AggregationKind, MilSpec};
use crate::training::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    MilSigmoid,
    MilSoftmax,
    MilAvg,
    RevCnn,
    RevRnn,
    RevLrEmb,
    RevLrBow,
    SegLr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::MilSigmoid,
        ModelKind::MilSoftmax,
        ModelKind::MilAvg,
        ModelKind::RevCnn,
        ModelKind::RevRnn,
        ModelKind::RevLrEmb,
        ModelKind::RevLrBow,
        ModelKind::SegLr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::MilSigmoid => "mil-sigmoid",
            ModelKind::MilSoftmax => "mil-softmax",
            ModelKind::MilAvg => "mil-avg",
            ModelKind::RevCnn => "rev-cnn",
            ModelKind::RevRnn => "rev-rnn",
            ModelKind::RevLrEmb => "rev-lr-emb",
            ModelKind::RevLrBow => "rev-lr-bow",
            ModelKind::SegLr => "seg-lr",
        }
    }

    pub fn aggregation(self) -> Option<AggregationKind> {
        match self {
            ModelKind::MilSigmoid => Some(AggregationKind::SigmoidAttention),
            ModelKind::MilSoftmax => Some(AggregationKind::SoftmaxAttention),
            ModelKind::MilAvg => Some(AggregationKind::Uniform),
            _ => None,
        }
    }

    pub fn from_aggregation(kind: AggregationKind) -> Self {
        match kind {
            AggregationKind::SigmoidAttention => ModelKind::MilSigmoid,
            AggregationKind::SoftmaxAttention => ModelKind::MilSoftmax,
            AggregationKind::Uniform => ModelKind::MilAvg,
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown model `{s}`; valid models: {}", Self::valid_names()))
    }
}

/// Architecture sizes shared by every neural model kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub embed_dim: usize,
    pub cnn: CnnConfig,
    pub gru_hidden: usize,
    pub attention_dim: usize,
    pub embedding_dropout: f64,
    pub state_dropout: f64,
    pub train_embeddings: bool,
    /// Longest word n-gram of the TF-IDF features.
    pub tfidf_max_n: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let m = MilSpec::default();
        ModelConfig {
            kind: ModelKind::MilSigmoid,
            embed_dim: m.embed_dim,
            cnn: m.cnn,
            gru_hidden: m.gru_hidden,
            attention_dim: m.attention_dim,
            embedding_dropout: m.embedding_dropout,
            state_dropout: m.state_dropout,
            train_embeddings: m.train_embeddings,
            tfidf_max_n: 3,
        }
    }
}

impl ModelConfig {
    pub fn mil_spec(&self, num_classes: usize, vocab_size: usize, aggregation: AggregationKind) -> MilSpec {
        MilSpec {
            num_classes,
            vocab_size,
            embed_dim: self.embed_dim,
            cnn: self.cnn.clone(),
            gru_hidden: self.gru_hidden,
            attention_dim: self.attention_dim,
            aggregation,
            embedding_dropout: self.embedding_dropout,
            state_dropout: self.state_dropout,
            train_embeddings: self.train_embeddings,
        }
    }

    pub fn rev_spec(&self, num_classes: usize, vocab_size: usize, encoder: RevEncoder) -> RevSpec {
        RevSpec {
            encoder,
            num_classes,
            vocab_size,
            embed_dim: self.embed_dim,
            cnn: self.cnn.clone(),
            gru_hidden: self.gru_hidden,
            attention_dim: self.attention_dim,
            embedding_dropout: self.embedding_dropout,
            state_dropout: self.state_dropout,
            train_embeddings: self.train_embeddings,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub num_classes: usize,
    pub segment_labels: SegmentLabelSpace,
    /// word2vec text file; random vectors when absent.
    pub embeddings: Option<PathBuf>,
    pub min_count: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train: None,
            validation: None,
            test: None,
            num_classes: 2,
            segment_labels: SegmentLabelSpace::SameAsReview,
            embeddings: None,
            min_count: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Gated polarity scores, CV-tuned thresholds, macro-F1.
    ThreeClass,
    /// Weighted P/R/F1, AUPR and optional bootstrap intervals.
    Binary,
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "three-class" => Ok(Protocol::ThreeClass),
            "binary" => Ok(Protocol::Binary),
            _ => Err(format!("unknown protocol `{s}` (three-class, binary)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub protocol: Protocol,
    pub folds: usize,
    /// Index of the positive class for the binary protocol (0-based).
    pub positive: usize,
    /// Bootstrap iterations; no intervals when absent.
    pub bootstrap: Option<usize>,
    pub resample_size: usize,
    /// Binary protocol: pick the review cut on `p_positive` that maximizes
    /// weighted F1 on the validation file instead of using argmax.
    pub tune_threshold: bool,
    /// Gate weight of mil-avg segments.
    pub avg_attention: AvgAttention,
}

/// What `α` a uniform-aggregation segment carries into the gated score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AvgAttention {
    /// `1/M`, its weight in the aggregation.
    #[default]
    InverseCount,
    /// `1`, as for models without attention.
    One,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            protocol: Protocol::ThreeClass,
            folds: 10,
            positive: 1,
            bootstrap: None,
            resample_size: crate::evaluation::BOOTSTRAP_RESAMPLE,
            tune_threshold: false,
            avg_attention: AvgAttention::InverseCount,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HighlightConfig {
    /// Segments with weight above this are highlighted.
    pub threshold: f64,
}

impl Default for HighlightConfig {
    fn default() -> Self {
        HighlightConfig { threshold: 0.1 }
    }
}

/// Everything a command may read. Each command uses its own sections.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SyntheticSpec,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub logreg: LogRegConfig,
    pub eval: EvalConfig,
    pub highlight: HighlightConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::file(path))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("seed = 3\n[model]\nkind = \"rev-cnn\"\n").is_ok());
        assert!(RunConfig::parse("sed = 3\n").is_err());
        assert!(RunConfig::parse("[model]\nkind = \"rev-cnn\"\nwidth = 3\n").is_err());
        assert!(RunConfig::parse("[train]\nlr = 1.0\n").is_err());
    }

    #[test]
    fn resolved_config_roundtrips() {
        let c = RunConfig::parse("seed = 9\n[eval]\nprotocol = \"binary\"\nbootstrap = 200\n").unwrap();
        let again = RunConfig::parse(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, again);
        assert_eq!(again.eval.protocol, Protocol::Binary);
    }

    #[test]
    fn model_names() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        let err = "mil-max".parse::<ModelKind>().unwrap_err();
        assert!(err.contains("mil-sigmoid") && err.contains("seg-lr"), "{err}");
    }
}
