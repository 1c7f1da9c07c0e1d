use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::logreg::{train_logreg, Features, LogReg, LogRegConfig, LogRegFit};
use super::tfidf::TfidfVectorizer;
use crate::corpus::{EmbeddingTable, IndexedReview, Vocabulary};
use crate::diffcore::{ParamId, ParamSet, Tape, Tensor, Var};
use crate::encoders::{encode_avg, glorot, BiGru, CnnConfig, CnnEncoder};
use crate::error::{Error, Result};
use crate::milnet::{embedding_tensor, ReviewModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevEncoder {
    /// Word CNN with max-over-time pooling.
    Cnn,
    /// Word Bi-GRU with softmax attention over positions.
    Rnn,
}

/// A flat review classifier: the review is one token sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RevSpec {
    pub encoder: RevEncoder,
    pub num_classes: usize,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub cnn: CnnConfig,
    pub gru_hidden: usize,
    pub attention_dim: usize,
    pub embedding_dropout: f64,
    pub state_dropout: f64,
    pub train_embeddings: bool,
}

impl Default for RevSpec {
    fn default() -> Self {
        RevSpec {
            encoder: RevEncoder::Cnn,
            num_classes: 2,
            vocab_size: 2,
            embed_dim: 300,
            cnn: CnnConfig::default(),
            gru_hidden: 50,
            attention_dim: 100,
            embedding_dropout: 0.5,
            state_dropout: 0.5,
            train_embeddings: true,
        }
    }
}

impl RevSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.vocab_size < 2 || self.embed_dim == 0 {
            return Err(Error::Config(format!("invalid flat model sizes: {self:?}")));
        }
        match self.encoder {
            RevEncoder::Cnn => self.cnn.validate()?,
            RevEncoder::Rnn if self.gru_hidden == 0 || self.attention_dim == 0 => {
                return Err(Error::Config("GRU and attention sizes must be positive".into()))
            }
            RevEncoder::Rnn => {}
        }
        for rate in [self.embedding_dropout, self.state_dropout] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
            }
        }
        Ok(())
    }

    fn feature_dim(&self) -> usize {
        match self.encoder {
            RevEncoder::Cnn => self.cnn.output_dim(),
            RevEncoder::Rnn => 2 * self.gru_hidden,
        }
    }
}

#[derive(Clone, Debug)]
enum Reader {
    Cnn(CnnEncoder),
    Rnn { gru: BiGru, w: ParamId, b: ParamId, u: ParamId },
}

/// Rev-CNN and Rev-RNN. The same forward pass serves whole reviews in
/// training and single segments at test time.
#[derive(Clone, Debug)]
pub struct RevNet {
    spec: RevSpec,
    params: ParamSet,
    embedding: ParamId,
    reader: Reader,
    clf_w: ParamId,
    clf_b: ParamId,
}

impl RevNet {
    pub fn new(spec: RevSpec, embeddings: Option<&EmbeddingTable>, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let emb = embedding_tensor(spec.vocab_size, spec.embed_dim, embeddings, &mut rng)?;
        params.add("embedding", emb, spec.train_embeddings)?;
        match spec.encoder {
            RevEncoder::Cnn => {
                CnnEncoder::new(&mut params, "cnn", spec.embed_dim, spec.cnn.clone(), &mut rng)?;
            }
            RevEncoder::Rnn => {
                BiGru::new(&mut params, "words", spec.embed_dim, spec.gru_hidden, &mut rng)?;
                let (m, n) = (spec.attention_dim, 2 * spec.gru_hidden);
                params.add("attention.w", glorot(&mut rng, &[m, n], n, m), true)?;
                params.add("attention.b", Tensor::zeros(&[m]), true)?;
                params.add("attention.u", glorot(&mut rng, &[m], m, 1), true)?;
            }
        }
        let (c, l) = (spec.num_classes, spec.feature_dim());
        params.add("classifier.w", glorot(&mut rng, &[c, l], l, c), true)?;
        params.add("classifier.b", Tensor::zeros(&[c]), true)?;
        Self::from_params(spec, params)
    }

    pub fn from_params(spec: RevSpec, params: ParamSet) -> Result<Self> {
        spec.validate()?;
        let embedding = params.id("embedding")?;
        let reader = match spec.encoder {
            RevEncoder::Cnn => Reader::Cnn(CnnEncoder::bind(&params, "cnn", spec.cnn.clone())?),
            RevEncoder::Rnn => Reader::Rnn {
                gru: BiGru::bind(&params, "words")?,
                w: params.id("attention.w")?,
                b: params.id("attention.b")?,
                u: params.id("attention.u")?,
            },
        };
        let clf_w = params.id("classifier.w")?;
        let clf_b = params.id("classifier.b")?;
        let checks = [
            (embedding, vec![spec.vocab_size, spec.embed_dim]),
            (clf_w, vec![spec.num_classes, spec.feature_dim()]),
            (clf_b, vec![spec.num_classes]),
        ];
        for (id, shape) in checks {
            let p = params.get(id);
            if p.tensor.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` has shape {:?}, spec needs {shape:?}",
                    p.name,
                    p.tensor.shape()
                )));
            }
        }
        Ok(RevNet {
            spec,
            params,
            embedding,
            reader,
            clf_w,
            clf_b,
        })
    }

    pub fn spec(&self) -> &RevSpec {
        &self.spec
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }

    /// Class distribution of one token sequence, recorded on `tape`.
    pub fn distribution(&self, tape: &mut Tape, ids: &[usize]) -> Result<Var> {
        if ids.is_empty() {
            return Err(Error::EmptySegment);
        }
        let table = tape.param(self.embedding);
        let x = tape.embedding(table, ids)?;
        let x = tape.dropout(x, self.spec.embedding_dropout)?;
        let h = match &self.reader {
            Reader::Cnn(cnn) => cnn.encode(tape, x)?,
            Reader::Rnn { gru, w, b, u } => {
                let ctx = gru.contextualize(tape, x, self.spec.state_dropout)?;
                let (w, b, u) = (tape.param(*w), tape.param(*b), tape.param(*u));
                let pre = tape.matmul_t(ctx, w)?;
                let pre = tape.add_bias(pre, b)?;
                let act = tape.tanh(pre)?;
                let e = tape.matmul(act, u)?;
                let alpha = tape.softmax(e)?;
                tape.matmul(alpha, ctx)?
            }
        };
        let w = tape.param(self.clf_w);
        let b = tape.param(self.clf_b);
        let logits = tape.matmul_t(h, w)?;
        let logits = tape.add_bias(logits, b)?;
        tape.softmax(logits)
    }

    /// Eval-mode distribution of a review or a single segment.
    pub fn predict(&self, ids: &[usize]) -> Result<Vec<f64>> {
        let mut tape = Tape::inference(&self.params);
        let p = self.distribution(&mut tape, ids)?;
        Ok(tape.value(p).data().to_vec())
    }
}

impl ReviewModel for RevNet {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    fn review_distribution(&self, tape: &mut Tape, review: &IndexedReview, _pad_to: usize) -> Result<Var> {
        self.distribution(tape, &review.flat())
    }

    fn regularized(&self) -> Vec<ParamId> {
        vec![self.clf_w]
    }
}

/// Input representation of a Rev-LR model.
#[derive(Clone, Debug, PartialEq)]
pub enum RevLrFeatures {
    /// Mean word embedding (Rev-LR-EMB).
    AverageEmbedding { vocab: Vocabulary, table: EmbeddingTable },
    /// TF-IDF over 1- to 3-grams (Rev-LR-BoW).
    Tfidf(TfidfVectorizer),
}

/// Logistic regression over review-level features, applied unchanged to
/// segments.
#[derive(Clone, Debug, PartialEq)]
pub struct RevLr {
    pub features: RevLrFeatures,
    pub model: LogReg,
}

impl RevLrFeatures {
    fn dense_row(vocab: &Vocabulary, table: &EmbeddingTable, tokens: &[String]) -> Result<Vec<f64>> {
        encode_avg(&vocab.ids(tokens), table)
    }

    fn matrix(&self, docs: &[Vec<String>]) -> Result<Features> {
        match self {
            RevLrFeatures::AverageEmbedding { vocab, table } => Ok(Features::Dense(
                docs.iter()
                    .map(|d| Self::dense_row(vocab, table, d))
                    .collect::<Result<Vec<_>>>()?,
            )),
            RevLrFeatures::Tfidf(v) => Ok(Features::Sparse {
                dim: v.dim(),
                rows: docs.iter().map(|d| v.apply(d)).collect::<Result<Vec<_>>>()?,
            }),
        }
    }
}

impl RevLr {
    /// Fits on tokenized reviews. For TF-IDF features the vectorizer is
    /// fitted on `docs` first.
    pub fn fit(
        features: RevLrFeatures,
        docs: &[Vec<String>],
        labels: &[usize],
        weights: &[f64],
        num_classes: usize,
        config: &LogRegConfig,
    ) -> Result<(Self, LogRegFit)> {
        let features = match features {
            RevLrFeatures::Tfidf(v) if v.idf.is_empty() => RevLrFeatures::Tfidf(TfidfVectorizer::fit(docs, v.max_n)?),
            other => other,
        };
        let x = features.matrix(docs)?;
        let (model, fit) = train_logreg(&x, labels, weights, num_classes, config)?;
        Ok((RevLr { features, model }, fit))
    }

    /// Distribution for any token sequence: a review or one segment.
    pub fn predict(&self, tokens: &[String]) -> Result<Vec<f64>> {
        match &self.features {
            RevLrFeatures::AverageEmbedding { vocab, table } => {
                Ok(self.model.predict_dense(&RevLrFeatures::dense_row(vocab, table, tokens)?))
            }
            RevLrFeatures::Tfidf(v) => Ok(self.model.predict_sparse(&v.apply(tokens)?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::random_embeddings;
    use crate::diffcore::gradcheck::check_gradients;
    use crate::diffcore::Mode;
    use crate::encoders::Nonlinearity;

    fn spec(encoder: RevEncoder) -> RevSpec {
        RevSpec {
            encoder,
            num_classes: 3,
            vocab_size: 10,
            embed_dim: 4,
            cnn: CnnConfig {
                kernel_widths: vec![2, 3],
                feature_maps: 3,
                nonlinearity: Nonlinearity::Tanh,
            },
            gru_hidden: 3,
            attention_dim: 3,
            ..RevSpec::default()
        }
    }

    #[test]
    fn review_and_segment_share_the_forward_pass() {
        for enc in [RevEncoder::Cnn, RevEncoder::Rnn] {
            let net = RevNet::new(spec(enc), None, 1).unwrap();
            let review = IndexedReview {
                segments: vec![vec![2, 3, 4]],
                label: 0,
                weight: 1.0,
            };
            let mut tape = Tape::inference(net.params());
            let v = net.review_distribution(&mut tape, &review, 5).unwrap();
            assert_eq!(tape.value(v).data(), net.predict(&[2, 3, 4]).unwrap().as_slice());
        }
    }

    #[test]
    fn gradients_check_out() {
        for enc in [RevEncoder::Cnn, RevEncoder::Rnn] {
            let mut s = spec(enc);
            s.embedding_dropout = 0.0;
            s.state_dropout = 0.0;
            let net = RevNet::new(s, None, 2).unwrap();
            let report = check_gradients(net.params(), Mode::Train, 0, 40, 1e-5, 3, |tape| {
                let p = net.distribution(tape, &[2, 5, 7, 1])?;
                let y = tape.pick(p, 1)?;
                tape.log(y)
            })
            .unwrap();
            assert!(report.max_relative_error() < 1e-5, "{enc:?} {:?}", report.worst());
        }
    }

    #[test]
    fn rebinding_checks_shapes() {
        let net = RevNet::new(spec(RevEncoder::Cnn), None, 1).unwrap();
        let mut other = spec(RevEncoder::Cnn);
        other.num_classes = 2;
        assert!(RevNet::from_params(other, net.clone().into_params()).is_err());
        assert!(RevNet::from_params(spec(RevEncoder::Rnn), net.into_params()).is_err());
    }

    #[test]
    fn lr_emb_on_one_token_uses_that_embedding() {
        let vocab = Vocabulary::from_tokens(["good", "bad", "ok"]);
        let table = random_embeddings(&vocab, 3, 4).unwrap();
        let docs: Vec<Vec<String>> = [["good", "good"], ["bad", "ok"], ["good", "ok"], ["bad", "bad"]]
            .iter()
            .map(|d| d.iter().map(|t| t.to_string()).collect())
            .collect();
        let features = RevLrFeatures::AverageEmbedding {
            vocab: vocab.clone(),
            table: table.clone(),
        };
        let (m, _) = RevLr::fit(features, &docs, &[1, 0, 1, 0], &[1.0; 4], 2, &LogRegConfig::default()).unwrap();
        let direct = m.model.predict_dense(table.row(vocab.id("bad")));
        assert_eq!(m.predict(&["bad".to_string()]).unwrap(), direct);
    }

    #[test]
    fn lr_bow_fits_vectorizer_on_training_docs() {
        let docs: Vec<Vec<String>> = ["great tasty food", "awful cold food", "tasty soup", "cold soup"]
            .iter()
            .map(|d| d.split(' ').map(str::to_string).collect())
            .collect();
        let (m, _) = RevLr::fit(
            RevLrFeatures::Tfidf(TfidfVectorizer {
                max_n: 2,
                ..TfidfVectorizer::default()
            }),
            &docs,
            &[1, 0, 1, 0],
            &[1.0; 4],
            2,
            &LogRegConfig::default(),
        )
        .unwrap();
        let p = m.predict(&["tasty".to_string()]).unwrap();
        assert!(p[1] > 0.5, "{p:?}");
    }
}
