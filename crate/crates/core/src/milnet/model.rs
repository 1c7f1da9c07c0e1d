use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AggregationKind, ReviewPrediction, WEIGHT_FLOOR};
use crate::corpus::{EmbeddingTable, IndexedReview, OOV_RANGE, PAD};
use crate::diffcore::{ParamId, ParamSet, Tape, Tensor, Var};
use crate::encoders::{glorot, uniform, BiGru, CnnConfig, CnnEncoder};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MilSpec {
    pub num_classes: usize,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub cnn: CnnConfig,
    /// Hidden size of each GRU direction.
    pub gru_hidden: usize,
    pub attention_dim: usize,
    pub aggregation: AggregationKind,
    pub embedding_dropout: f64,
    pub state_dropout: f64,
    pub train_embeddings: bool,
}

impl Default for MilSpec {
    fn default() -> Self {
        MilSpec {
            num_classes: 2,
            vocab_size: 2,
            embed_dim: 300,
            cnn: CnnConfig::default(),
            gru_hidden: 50,
            attention_dim: 100,
            aggregation: AggregationKind::SigmoidAttention,
            embedding_dropout: 0.5,
            state_dropout: 0.5,
            train_embeddings: true,
        }
    }
}

impl MilSpec {
    pub fn validate(&self) -> Result<()> {
        self.cnn.validate()?;
        if self.num_classes < 2 || self.vocab_size < 2 || self.embed_dim == 0 {
            return Err(Error::Config(format!(
                "need >= 2 classes, a vocabulary and a positive embedding size: {self:?}"
            )));
        }
        if self.aggregation.uses_attention() && (self.gru_hidden == 0 || self.attention_dim == 0) {
            return Err(Error::Config("attention needs positive GRU and attention sizes".into()));
        }
        for rate in [self.embedding_dropout, self.state_dropout] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// A model trained from review labels: what the training loop needs.
pub trait ReviewModel {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn num_classes(&self) -> usize;
    /// Records the review distribution (`[C]`) on `tape`. `pad_to` is the
    /// padded bag size of the review's batch.
    fn review_distribution(&self, tape: &mut Tape, review: &IndexedReview, pad_to: usize) -> Result<Var>;
    /// Parameters under the L2 penalty.
    fn regularized(&self) -> Vec<ParamId>;
}

/// Tape handles of one forward pass.
#[derive(Clone, Debug)]
pub struct ReviewVars {
    pub review: Var,
    /// `[pad_to, C]`; padded rows are zero.
    pub segment_probs: Var,
    /// `[pad_to]`; zero at padded positions.
    pub weights: Var,
    pub scores: Option<Var>,
    pub fallback: bool,
}

#[derive(Clone, Debug)]
struct Attention {
    context: BiGru,
    w: ParamId,
    b: ParamId,
    u: ParamId,
}

/// CNN segment encoder, softmax segment classifier and one of the three
/// aggregation functions.
#[derive(Clone, Debug)]
pub struct MilNet {
    spec: MilSpec,
    params: ParamSet,
    embedding: ParamId,
    cnn: CnnEncoder,
    clf_w: ParamId,
    clf_b: ParamId,
    attention: Option<Attention>,
}

/// Embedding parameter: the given table, or random rows with a zero
/// padding row.
pub(crate) fn embedding_tensor(
    vocab_size: usize,
    dim: usize,
    table: Option<&EmbeddingTable>,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    match table {
        Some(t) if t.rows() != vocab_size || t.dim() != dim => Err(Error::Config(format!(
            "embedding table is {}x{}, model expects {vocab_size}x{dim}",
            t.rows(),
            t.dim()
        ))),
        Some(t) => Ok(t.matrix.clone()),
        None => {
            let mut m = uniform(rng, &[vocab_size, dim], OOV_RANGE);
            m.data_mut()[PAD * dim..(PAD + 1) * dim].fill(0.0);
            Ok(m)
        }
    }
}

impl MilNet {
    pub fn new(spec: MilSpec, embeddings: Option<&EmbeddingTable>, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let emb = embedding_tensor(spec.vocab_size, spec.embed_dim, embeddings, &mut rng)?;
        params.add("embedding", emb, spec.train_embeddings)?;
        CnnEncoder::new(&mut params, "cnn", spec.embed_dim, spec.cnn.clone(), &mut rng)?;
        let (c, l) = (spec.num_classes, spec.cnn.output_dim());
        params.add("classifier.w", glorot(&mut rng, &[c, l], l, c), true)?;
        params.add("classifier.b", Tensor::zeros(&[c]), true)?;
        if spec.aggregation.uses_attention() {
            BiGru::new(&mut params, "context", l, spec.gru_hidden, &mut rng)?;
            let (m, n) = (spec.attention_dim, 2 * spec.gru_hidden);
            params.add("attention.w", glorot(&mut rng, &[m, n], n, m), true)?;
            params.add("attention.b", Tensor::zeros(&[m]), true)?;
            params.add("attention.u", glorot(&mut rng, &[m], m, 1), true)?;
        }
        Self::from_params(spec, params)
    }

    /// Binds a model to an existing parameter set, checking every shape.
    pub fn from_params(spec: MilSpec, params: ParamSet) -> Result<Self> {
        spec.validate()?;
        let embedding = params.id("embedding")?;
        let cnn = CnnEncoder::bind(&params, "cnn", spec.cnn.clone())?;
        let clf_w = params.id("classifier.w")?;
        let clf_b = params.id("classifier.b")?;
        let attention = if spec.aggregation.uses_attention() {
            Some(Attention {
                context: BiGru::bind(&params, "context")?,
                w: params.id("attention.w")?,
                b: params.id("attention.b")?,
                u: params.id("attention.u")?,
            })
        } else {
            None
        };
        let (c, l, k) = (spec.num_classes, spec.cnn.output_dim(), spec.embed_dim);
        let mut expect = vec![
            (embedding, vec![spec.vocab_size, k]),
            (clf_w, vec![c, l]),
            (clf_b, vec![c]),
        ];
        for (&w, &width) in cnn_ids(&params, &spec.cnn)?.iter().zip(&spec.cnn.kernel_widths) {
            expect.push((w, vec![width, k, spec.cnn.feature_maps]));
        }
        if let Some(a) = &attention {
            let (m, n) = (spec.attention_dim, 2 * spec.gru_hidden);
            expect.push((a.w, vec![m, n]));
            expect.push((a.b, vec![m]));
            expect.push((a.u, vec![m]));
            if a.context.forward.hidden() != spec.gru_hidden {
                return Err(Error::Checkpoint("GRU size does not match the spec".into()));
            }
        }
        for (id, shape) in expect {
            let p = params.get(id);
            if p.tensor.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` has shape {:?}, spec needs {shape:?}",
                    p.name,
                    p.tensor.shape()
                )));
            }
        }
        Ok(MilNet {
            spec,
            params,
            embedding,
            cnn,
            clf_w,
            clf_b,
            attention,
        })
    }

    pub fn spec(&self) -> &MilSpec {
        &self.spec
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }

    pub fn aggregation(&self) -> AggregationKind {
        self.spec.aggregation
    }

    /// Embeds every token of the review in one lookup and encodes each
    /// segment: `[M, ℓ]`.
    fn encode_segments(&self, tape: &mut Tape, segments: &[Vec<usize>]) -> Result<Var> {
        if segments.is_empty() || segments.iter().any(Vec::is_empty) {
            return Err(Error::EmptySegment);
        }
        let flat = segments.concat();
        let table = tape.param(self.embedding);
        let x = tape.embedding(table, &flat)?;
        let x = tape.dropout(x, self.spec.embedding_dropout)?;
        let mut offset = 0;
        let mut hs = Vec::with_capacity(segments.len());
        for seg in segments {
            let xs = tape.slice_rows(x, offset, seg.len())?;
            offset += seg.len();
            hs.push(self.cnn.encode(tape, xs)?);
        }
        tape.stack(&hs)
    }

    fn classify(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        let w = tape.param(self.clf_w);
        let b = tape.param(self.clf_b);
        let logits = tape.matmul_t(h, w)?;
        let logits = tape.add_bias(logits, b)?;
        tape.softmax(logits)
    }

    fn scores(&self, tape: &mut Tape, a: &Attention, h: Var) -> Result<Var> {
        let ctx = a.context.contextualize(tape, h, self.spec.state_dropout)?;
        let w = tape.param(a.w);
        let b = tape.param(a.b);
        let u = tape.param(a.u);
        let pre = tape.matmul_t(ctx, w)?;
        let pre = tape.add_bias(pre, b)?;
        let act = tape.tanh(pre)?;
        tape.matmul(act, u)
    }

    /// Full forward pass on `tape`. Positions `M..pad_to` are padding: they
    /// are not encoded and get weight 0.
    pub fn forward_tape(&self, tape: &mut Tape, segments: &[Vec<usize>], pad_to: usize) -> Result<ReviewVars> {
        let m = segments.len();
        let mp = pad_to.max(m);
        let pad = mp - m;
        let h = self.encode_segments(tape, segments)?;
        let probs = self.classify(tape, h)?;
        let probs = tape.pad_rows(probs, 0, pad)?;
        let mask: Vec<bool> = (0..mp).map(|i| i < m).collect();
        let uniform_weights = || {
            let w: Vec<f64> = mask.iter().map(|&r| if r { 1.0 / m as f64 } else { 0.0 }).collect();
            Tensor::vector(w)
        };
        let (mut weights, scores) = match &self.attention {
            None => (tape.constant(uniform_weights()), None),
            Some(a) => {
                let e = self.scores(tape, a, h)?;
                let e = if pad > 0 {
                    let zeros = tape.constant(Tensor::zeros(&[pad]));
                    tape.concat(&[e, zeros])?
                } else {
                    e
                };
                let w = match self.spec.aggregation {
                    AggregationKind::SoftmaxAttention => tape.masked_softmax(e, &mask)?,
                    _ => {
                        let s = tape.sigmoid(e)?;
                        if pad > 0 {
                            let keep = Tensor::vector(mask.iter().map(|&r| r as u8 as f64).collect());
                            let keep = tape.constant(keep);
                            tape.mul(s, keep)?
                        } else {
                            s
                        }
                    }
                };
                (w, Some(e))
            }
        };
        let mut fallback = false;
        if tape.value(weights).sum() < WEIGHT_FLOOR {
            weights = tape.constant(uniform_weights());
            fallback = true;
        }
        let total = tape.sum(weights)?;
        let log_total = tape.log(total)?;
        let neg = tape.scale(log_total, -1.0)?;
        let inv_total = tape.exp(neg)?;
        let mixed = tape.matmul(weights, probs)?;
        let review = tape.mul_scalar(mixed, inv_total)?;
        Ok(ReviewVars {
            review,
            segment_probs: probs,
            weights,
            scores,
            fallback,
        })
    }

    /// Eval-mode prediction with every intermediate.
    pub fn predict(&self, segments: &[Vec<usize>]) -> Result<ReviewPrediction> {
        self.predict_padded(segments, segments.len())
    }

    pub fn predict_padded(&self, segments: &[Vec<usize>], pad_to: usize) -> Result<ReviewPrediction> {
        let mut tape = Tape::inference(&self.params);
        let vars = self.forward_tape(&mut tape, segments, pad_to)?;
        let probs = tape.value(vars.segment_probs);
        Ok(ReviewPrediction {
            review: tape.value(vars.review).data().to_vec(),
            segments: (0..probs.rows()).map(|i| probs.row(i).to_vec()).collect(),
            weights: tape.value(vars.weights).data().to_vec(),
            scores: vars.scores.map(|e| tape.value(e).data().to_vec()),
            fallback: vars.fallback,
        })
    }

    /// Segment vectors `hᵢ` in eval mode, `[M, ℓ]`.
    pub fn segment_vectors(&self, segments: &[Vec<usize>]) -> Result<Tensor> {
        let mut tape = Tape::inference(&self.params);
        let h = self.encode_segments(&mut tape, segments)?;
        Ok(tape.value(h).clone())
    }
}

fn cnn_ids(params: &ParamSet, cnn: &CnnConfig) -> Result<Vec<ParamId>> {
    cnn.kernel_widths
        .iter()
        .map(|w| params.id(&format!("cnn.kernel{w}")))
        .collect()
}

impl ReviewModel for MilNet {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    fn review_distribution(&self, tape: &mut Tape, review: &IndexedReview, pad_to: usize) -> Result<Var> {
        Ok(self.forward_tape(tape, &review.segments, pad_to)?.review)
    }

    fn regularized(&self) -> Vec<ParamId> {
        vec![self.clf_w]
    }
}
