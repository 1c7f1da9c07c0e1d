//! The hierarchical multiple-instance model.
//!
//! Segments are encoded by a CNN and classified independently; the review
//! distribution is a weighted average of the segment distributions,
//! `p = Σ αᵢ pᵢ / Σ αᵢ`, with weights from one of three aggregation
//! functions. The free functions here are plain-value versions of the steps
//! the model records on a tape.

mod model;

use serde::{Deserialize, Serialize};

use crate::diffcore::{argmax, sigmoid, softmax_in_place, Tensor};

pub(crate) use model::embedding_tensor;
pub use model::{MilNet, MilSpec, ReviewModel, ReviewVars};

/// Below this total weight the weighted average falls back to the mean.
pub const WEIGHT_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationKind {
    /// `αᵢ = 1/M`.
    Uniform,
    /// `α = softmax(e)`: one categorical choice of segment.
    SoftmaxAttention,
    /// `αᵢ = σ(eᵢ)`: an independent Bernoulli per segment.
    SigmoidAttention,
}

impl AggregationKind {
    pub const ALL: [AggregationKind; 3] = [
        AggregationKind::Uniform,
        AggregationKind::SoftmaxAttention,
        AggregationKind::SigmoidAttention,
    ];

    pub fn uses_attention(self) -> bool {
        self != AggregationKind::Uniform
    }

    pub fn name(self) -> &'static str {
        match self {
            AggregationKind::Uniform => "uniform",
            AggregationKind::SoftmaxAttention => "softmax_attention",
            AggregationKind::SigmoidAttention => "sigmoid_attention",
        }
    }
}

impl std::str::FromStr for AggregationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" | "avg" => Ok(AggregationKind::Uniform),
            "softmax" | "softmax_attention" => Ok(AggregationKind::SoftmaxAttention),
            "sigmoid" | "sigmoid_attention" => Ok(AggregationKind::SigmoidAttention),
            _ => Err(format!("unknown aggregation `{s}` (uniform, softmax, sigmoid)")),
        }
    }
}

/// Everything the model computed for one review.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewPrediction {
    /// Review distribution `p`.
    pub review: Vec<f64>,
    /// Segment distributions `pᵢ`, one row per segment.
    pub segments: Vec<Vec<f64>>,
    /// Aggregation weights `αᵢ`; zero at padded positions.
    pub weights: Vec<f64>,
    /// Attention scores `eᵢ`; absent for uniform aggregation.
    pub scores: Option<Vec<f64>>,
    /// Set when the weights summed below [`WEIGHT_FLOOR`] and the plain
    /// mean was used.
    pub fallback: bool,
}

impl ReviewPrediction {
    pub fn label(&self) -> usize {
        argmax(&self.review)
    }
}

/// Per-segment argmax label (ties to the lower class) and weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentPrediction {
    pub label: usize,
    pub weight: f64,
}

pub fn predict_segments(pred: &ReviewPrediction) -> Vec<SegmentPrediction> {
    pred.segments
        .iter()
        .zip(&pred.weights)
        .map(|(p, &weight)| SegmentPrediction {
            label: argmax(p),
            weight,
        })
        .collect()
}

/// `softmax(W h + b)` with `W` of shape `[C, ℓ]`.
pub fn classify_segment(h: &[f64], w: &Tensor, b: &[f64]) -> Vec<f64> {
    let mut logits: Vec<f64> = (0..w.rows())
        .map(|c| b[c] + w.row(c).iter().zip(h).map(|(x, y)| x * y).sum::<f64>())
        .collect();
    softmax_in_place(&mut logits);
    logits
}

/// `eᵢ = u_aᵀ tanh(W_a h′ᵢ + b_a)` with `W_a` of shape `[m, n]`.
pub fn attention_scores(contexts: &[Vec<f64>], w_a: &Tensor, b_a: &[f64], u_a: &[f64]) -> Vec<f64> {
    contexts
        .iter()
        .map(|h| {
            (0..w_a.rows())
                .map(|j| {
                    let pre = b_a[j] + w_a.row(j).iter().zip(h).map(|(x, y)| x * y).sum::<f64>();
                    u_a[j] * pre.tanh()
                })
                .sum()
        })
        .collect()
}

pub fn softmax_weights(scores: &[f64]) -> Vec<f64> {
    let mut a = scores.to_vec();
    softmax_in_place(&mut a);
    a
}

pub fn sigmoid_weights(scores: &[f64]) -> Vec<f64> {
    scores.iter().map(|&e| sigmoid(e)).collect()
}

pub fn uniform_weights(m: usize) -> Vec<f64> {
    vec![1.0 / m as f64; m]
}

/// `Σ αᵢ pᵢ / Σ αᵢ`, or the plain mean (and `true`) when `Σ αᵢ` is below
/// [`WEIGHT_FLOOR`].
pub fn aggregate(segment_probs: &[Vec<f64>], weights: &[f64]) -> (Vec<f64>, bool) {
    let c = segment_probs.first().map_or(0, Vec::len);
    let total: f64 = weights.iter().sum();
    let (weights, fallback) = if total < WEIGHT_FLOOR {
        (uniform_weights(segment_probs.len()), true)
    } else {
        (weights.to_vec(), false)
    };
    let total: f64 = weights.iter().sum();
    let mut p = vec![0.0; c];
    for (pi, &a) in segment_probs.iter().zip(&weights) {
        for (dst, &v) in p.iter_mut().zip(pi) {
            *dst += a * v;
        }
    }
    p.iter_mut().for_each(|v| *v /= total);
    (p, fallback)
}
