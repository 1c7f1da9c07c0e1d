//! Model construction, fitting, scoring and checkpoint files, shared by the
//! commands.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, ModelKind, RunConfig};
use crate::baselines::{
    train_seg_lr, LogReg, LogRegFit, RevEncoder, RevLr, RevLrFeatures, RevNet, TfidfVectorizer,
};
use crate::corpus::{
    load_embeddings, random_embeddings, Corpus, EmbeddingTable, Review, SegmentLabelSpace, Vocabulary,
};
use crate::diffcore::checkpoint::{load_params, save_params};
use crate::diffcore::{ParamSet, Tensor};
use crate::encoders::encode_avg;
use crate::error::{Error, Result};
use crate::evaluation::{ScoredReview, ScoredSegment};
use crate::io::write_json;
use crate::milnet::{AggregationKind, MilNet};
use crate::training::{derive_seed, train, TrainOutcome};

pub const PARAMS_FILE: &str = "model.params";
pub const CARD_FILE: &str = "model.json";
pub const VOCAB_FILE: &str = "vocab.json";
pub const TFIDF_FILE: &str = "tfidf.json";

#[derive(Clone, Debug)]
pub enum TrainedModel {
    Mil(MilNet),
    Rev(RevNet),
    RevLr(RevLr),
    SegLr { model: LogReg, table: EmbeddingTable },
}

/// A fitted model with the vocabulary it reads.
#[derive(Clone, Debug)]
pub struct Fitted {
    pub kind: ModelKind,
    pub model: TrainedModel,
    pub vocab: Vocabulary,
    pub num_classes: usize,
    pub segment_labels: SegmentLabelSpace,
    pub config: ModelConfig,
    pub training: Option<TrainOutcome>,
    pub logreg: Option<LogRegFit>,
}

/// Per-segment output: class distribution and aggregation weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentScore {
    pub probs: Vec<f64>,
    pub attention: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewScore {
    /// Absent for models without a review-level output.
    pub probs: Option<Vec<f64>>,
    pub segments: Vec<SegmentScore>,
}

/// Vocabulary of the training split and the initial word vectors.
pub fn vocab_and_embeddings(train: &Corpus, config: &RunConfig) -> Result<(Vocabulary, EmbeddingTable)> {
    let vocab = Vocabulary::build(train, config.data.min_count);
    let dim = config.model.embed_dim;
    let seed = derive_seed(config.seed, 3);
    let table = match &config.data.embeddings {
        Some(path) => load_embeddings(path, &vocab, dim, seed)?,
        None => random_embeddings(&vocab, dim, seed)?,
    };
    Ok((vocab, table))
}

fn tokens_of(review: &Review) -> Vec<String> {
    review.segments.iter().flat_map(|s| s.tokens.iter().cloned()).collect()
}

/// Fits `kind` on `train`, early-stopping neural models on `validation`.
pub fn fit(kind: ModelKind, config: &RunConfig, train_set: &Corpus, validation: &Corpus) -> Result<Fitted> {
    let (vocab, table) = vocab_and_embeddings(train_set, config)?;
    let c = train_set.num_classes;
    let init_seed = derive_seed(config.seed, 1);
    let mut train_config = config.train.clone();
    train_config.seed = derive_seed(config.seed, 2);
    let tr = vocab.index_corpus(train_set);
    let va = vocab.index_corpus(validation);
    let mut training = None;
    let mut logreg = None;
    let model = match kind {
        ModelKind::MilSigmoid | ModelKind::MilSoftmax | ModelKind::MilAvg => {
            let agg = kind.aggregation().expect("MIL kind");
            let mut net = MilNet::new(config.model.mil_spec(c, vocab.len(), agg), Some(&table), init_seed)?;
            training = Some(train(&mut net, &tr, &va, &train_config)?);
            TrainedModel::Mil(net)
        }
        ModelKind::RevCnn | ModelKind::RevRnn => {
            let enc = if kind == ModelKind::RevCnn { RevEncoder::Cnn } else { RevEncoder::Rnn };
            let mut net = RevNet::new(config.model.rev_spec(c, vocab.len(), enc), Some(&table), init_seed)?;
            training = Some(train(&mut net, &tr, &va, &train_config)?);
            TrainedModel::Rev(net)
        }
        ModelKind::RevLrEmb | ModelKind::RevLrBow => {
            let features = if kind == ModelKind::RevLrEmb {
                RevLrFeatures::AverageEmbedding {
                    vocab: vocab.clone(),
                    table,
                }
            } else {
                RevLrFeatures::Tfidf(TfidfVectorizer {
                    max_n: config.model.tfidf_max_n,
                    ..TfidfVectorizer::default()
                })
            };
            let docs: Vec<Vec<String>> = train_set.reviews.iter().map(tokens_of).collect();
            let (m, f) = RevLr::fit(features, &docs, &train_set.labels(), &train_set.weights(), c, &config.logreg)?;
            logreg = Some(f);
            TrainedModel::RevLr(m)
        }
        ModelKind::SegLr => TrainedModel::SegLr {
            model: train_seg_lr(train_set, &vocab, &table, &config.logreg)?,
            table,
        },
    };
    Ok(Fitted {
        kind,
        model,
        vocab,
        num_classes: c,
        segment_labels: train_set.segment_labels,
        config: config.model.clone(),
        training,
        logreg,
    })
}

impl Fitted {
    pub fn score_review(&self, review: &Review) -> Result<ReviewScore> {
        let ids: Vec<Vec<usize>> = review.segments.iter().map(|s| self.vocab.ids(&s.tokens)).collect();
        let one = |probs: Vec<f64>| SegmentScore { probs, attention: 1.0 };
        match &self.model {
            TrainedModel::Mil(net) => {
                let p = net.predict(&ids)?;
                let m = ids.len() as f64;
                let segments = p
                    .segments
                    .into_iter()
                    .zip(&p.weights)
                    .map(|(probs, &w)| SegmentScore {
                        probs,
                        attention: if net.aggregation() == AggregationKind::Uniform { 1.0 / m } else { w },
                    })
                    .collect();
                Ok(ReviewScore {
                    probs: Some(p.review),
                    segments,
                })
            }
            TrainedModel::Rev(net) => Ok(ReviewScore {
                probs: Some(net.predict(&ids.concat())?),
                segments: ids.iter().map(|s| net.predict(s).map(one)).collect::<Result<_>>()?,
            }),
            TrainedModel::RevLr(m) => Ok(ReviewScore {
                probs: Some(m.predict(&tokens_of(review))?),
                segments: review
                    .segments
                    .iter()
                    .map(|s| m.predict(&s.tokens).map(one))
                    .collect::<Result<_>>()?,
            }),
            TrainedModel::SegLr { model, table } => Ok(ReviewScore {
                probs: None,
                segments: ids
                    .iter()
                    .map(|s| Ok(one(model.predict_dense(&encode_avg(s, table)?))))
                    .collect::<Result<_>>()?,
            }),
        }
    }

    pub fn score_corpus(&self, corpus: &Corpus) -> Result<Vec<ReviewScore>> {
        corpus.reviews.iter().map(|r| self.score_review(r)).collect()
    }

    /// The parameter set written to the checkpoint file.
    fn params(&self) -> Result<ParamSet> {
        let logreg_params = |m: &LogReg, table: Option<&EmbeddingTable>| -> Result<ParamSet> {
            let mut p = ParamSet::new();
            if let Some(t) = table {
                p.add("embedding", t.matrix.clone(), false)?;
            }
            p.add("logreg.w", m.weights.clone(), true)?;
            p.add("logreg.b", Tensor::vector(m.bias.clone()), true)?;
            Ok(p)
        };
        match &self.model {
            TrainedModel::Mil(net) => Ok(net.clone().into_params()),
            TrainedModel::Rev(net) => Ok(net.clone().into_params()),
            TrainedModel::RevLr(m) => match &m.features {
                RevLrFeatures::AverageEmbedding { table, .. } => logreg_params(&m.model, Some(table)),
                RevLrFeatures::Tfidf(_) => logreg_params(&m.model, None),
            },
            TrainedModel::SegLr { model, table } => logreg_params(model, Some(table)),
        }
    }
}

/// Metadata stored next to the parameter file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCard {
    pub kind: ModelKind,
    pub num_classes: usize,
    pub segment_labels: SegmentLabelSpace,
    pub model: ModelConfig,
    pub vocab_size: usize,
    pub vocab_fingerprint: String,
    pub l2: Option<f64>,
}

/// Writes the parameter file, model card, vocabulary and (for TF-IDF
/// models) the vectorizer into `dir`; returns the written file names.
pub fn save_checkpoint(dir: &Path, fitted: &Fitted) -> Result<Vec<String>> {
    let l2 = match &fitted.model {
        TrainedModel::RevLr(m) => Some(m.model.l2),
        TrainedModel::SegLr { model, .. } => Some(model.l2),
        _ => None,
    };
    let card = ModelCard {
        kind: fitted.kind,
        num_classes: fitted.num_classes,
        segment_labels: fitted.segment_labels,
        model: fitted.config.clone(),
        vocab_size: fitted.vocab.len(),
        vocab_fingerprint: fitted.vocab.fingerprint(),
        l2,
    };
    save_params(&dir.join(PARAMS_FILE), &fitted.params()?)?;
    write_json(&dir.join(CARD_FILE), &card)?;
    write_json(&dir.join(VOCAB_FILE), &fitted.vocab)?;
    let mut files = vec![PARAMS_FILE.to_string(), CARD_FILE.to_string(), VOCAB_FILE.to_string()];
    if let TrainedModel::RevLr(RevLr {
        features: RevLrFeatures::Tfidf(v),
        ..
    }) = &fitted.model
    {
        write_json(&dir.join(TFIDF_FILE), v)?;
        files.push(TFIDF_FILE.to_string());
    }
    Ok(files)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(Error::file(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(dir: &Path) -> Result<Fitted> {
    let card: ModelCard = read_json(&dir.join(CARD_FILE))?;
    let vocab: Vocabulary = read_json(&dir.join(VOCAB_FILE))?;
    if vocab.fingerprint() != card.vocab_fingerprint || vocab.len() != card.vocab_size {
        return Err(Error::Checkpoint("vocabulary does not match the model card".into()));
    }
    let params = load_params(&dir.join(PARAMS_FILE))?;
    let (c, v) = (card.num_classes, vocab.len());
    let logreg = |params: &ParamSet| -> Result<LogReg> {
        Ok(LogReg {
            weights: params.tensor(params.id("logreg.w")?).clone(),
            bias: params.tensor(params.id("logreg.b")?).data().to_vec(),
            l2: card.l2.unwrap_or(0.0),
        })
    };
    let table = |params: &ParamSet| -> Result<EmbeddingTable> {
        Ok(EmbeddingTable {
            matrix: params.tensor(params.id("embedding")?).clone(),
            pretrained_rows: 0,
        })
    };
    let model = match card.kind {
        ModelKind::MilSigmoid | ModelKind::MilSoftmax | ModelKind::MilAvg => {
            let agg = card.kind.aggregation().expect("MIL kind");
            TrainedModel::Mil(MilNet::from_params(card.model.mil_spec(c, v, agg), params)?)
        }
        ModelKind::RevCnn => TrainedModel::Rev(RevNet::from_params(card.model.rev_spec(c, v, RevEncoder::Cnn), params)?),
        ModelKind::RevRnn => TrainedModel::Rev(RevNet::from_params(card.model.rev_spec(c, v, RevEncoder::Rnn), params)?),
        ModelKind::RevLrEmb => TrainedModel::RevLr(RevLr {
            features: RevLrFeatures::AverageEmbedding {
                vocab: vocab.clone(),
                table: table(&params)?,
            },
            model: logreg(&params)?,
        }),
        ModelKind::RevLrBow => TrainedModel::RevLr(RevLr {
            features: RevLrFeatures::Tfidf(read_json(&dir.join(TFIDF_FILE))?),
            model: logreg(&params)?,
        }),
        ModelKind::SegLr => TrainedModel::SegLr {
            model: logreg(&params)?,
            table: table(&params)?,
        },
    };
    Ok(Fitted {
        kind: card.kind,
        model,
        vocab,
        num_classes: c,
        segment_labels: card.segment_labels,
        config: card.model,
        training: None,
        logreg: None,
    })
}

/// Pairs model outputs with gold labels. Segments are included only when
/// every segment of `corpus` has a gold label.
pub fn scored_items(corpus: &Corpus, scores: &[ReviewScore]) -> (Vec<ScoredReview>, Vec<ScoredSegment>) {
    let reviews = corpus
        .reviews
        .iter()
        .zip(scores)
        .filter_map(|(r, s)| {
            s.probs.as_ref().map(|p| ScoredReview {
                probs: p.clone(),
                gold: r.label,
                sample_weight: r.sample_weight,
            })
        })
        .collect();
    let segments = if corpus.has_gold_segments() {
        corpus
            .reviews
            .iter()
            .zip(scores)
            .flat_map(|(r, s)| {
                r.segments.iter().zip(&s.segments).map(|(seg, sc)| ScoredSegment {
                    probs: sc.probs.clone(),
                    attention: sc.attention,
                    gold: seg.gold_label.expect("gold checked"),
                })
            })
            .collect()
    } else {
        Vec::new()
    };
    (reviews, segments)
}
