//! Mini-batching, the review-level loss and the training loop with
//! validation-based early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::IndexedReview;
use crate::diffcore::{argmax, AdadeltaConfig, AdadeltaState, Mode, ParamId, ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::evaluation::macro_f1;
use crate::milnet::ReviewModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Stop once this many epochs in a row fail to improve the validation
    /// loss.
    pub patience: usize,
    pub optimizer: AdadeltaConfig,
    /// Strength of `λ Σ w²` over the segment classifier weights.
    pub l2: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 50,
            patience: 10,
            optimizer: AdadeltaConfig::default(),
            l2: 1e-5,
            batch_size: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience >= self.max_epochs {
            return Err(Error::Config(format!(
                "need 0 <= patience < max_epochs, got patience {} and max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!("l2 must be a nonnegative number, got {}", self.l2)));
        }
        self.optimizer.validate()
    }
}

/// SplitMix64 of `base` and `stream`: independent seeds for sub-tasks.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(0x632be59bd9b4e5f3);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub indices: Vec<usize>,
    /// Largest segment count in the batch; shorter reviews are padded to it.
    pub pad_to: usize,
}

/// Reviews sorted by segment count (stable) and cut into consecutive
/// batches, so each batch holds reviews of similar length.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batches: Vec<Batch>,
}

pub fn make_batches(reviews: &[IndexedReview], batch_size: usize) -> Result<BatchPlan> {
    if reviews.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..reviews.len()).collect();
    order.sort_by_key(|&i| reviews[i].num_segments());
    let batches = order
        .chunks(batch_size)
        .map(|chunk| Batch {
            indices: chunk.to_vec(),
            pad_to: chunk.iter().map(|&i| reviews[i].num_segments()).max().unwrap_or(0),
        })
        .collect();
    Ok(BatchPlan { batches })
}

impl BatchPlan {
    /// Batch visiting order for `epoch`.
    pub fn epoch_order(&self, seed: u64, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.batches.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, epoch as u64)));
        order
    }
}

/// `-Σ w ln p[y] / Σ w` over plain distributions.
pub fn nll_value(dists: &[Vec<f64>], labels: &[usize], weights: &[f64]) -> Result<f64> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("loss over zero total sample weight"));
    }
    let mut acc = 0.0;
    for ((p, &y), &w) in dists.iter().zip(labels).zip(weights) {
        if w != 0.0 {
            acc -= w * p[y].ln();
        }
    }
    Ok(acc / total)
}

/// Tape version of [`nll_value`].
pub fn nll_loss(tape: &mut Tape, dists: &[Var], labels: &[usize], weights: &[f64]) -> Result<Var> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("loss over zero total sample weight"));
    }
    let mut acc: Option<Var> = None;
    for ((&d, &y), &w) in dists.iter().zip(labels).zip(weights) {
        if w == 0.0 {
            continue;
        }
        let p = tape.pick(d, y)?;
        let lp = tape.log(p)?;
        let term = tape.scale(lp, -w / total)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, term)?,
            None => term,
        });
    }
    Ok(acc.expect("positive total weight implies a term"))
}

/// `λ Σ w²` over `params`.
pub fn l2_penalty(tape: &mut Tape, params: &[ParamId], strength: f64) -> Result<Option<Var>> {
    if strength == 0.0 || params.is_empty() {
        return Ok(None);
    }
    let mut acc: Option<Var> = None;
    for &id in params {
        let w = tape.param(id);
        let sq = tape.mul(w, w)?;
        let s = tape.sum(sq)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, s)?,
            None => s,
        });
    }
    let total = acc.expect("nonempty");
    Ok(Some(tape.scale(total, strength)?))
}

/// Review distributions in eval mode.
pub fn predict_reviews<M: ReviewModel>(model: &M, reviews: &[IndexedReview]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(reviews.len());
    for r in reviews {
        let mut tape = Tape::inference(model.params());
        let v = model.review_distribution(&mut tape, r, r.num_segments())?;
        out.push(tape.value(v).data().to_vec());
    }
    Ok(out)
}

/// Eval-mode weighted NLL and macro-F1 of the argmax labels.
pub fn evaluate_reviews<M: ReviewModel>(model: &M, reviews: &[IndexedReview]) -> Result<(f64, f64)> {
    let dists = predict_reviews(model, reviews)?;
    let labels: Vec<usize> = reviews.iter().map(|r| r.label).collect();
    let weights: Vec<f64> = reviews.iter().map(|r| r.weight).collect();
    let loss = nll_value(&dists, &labels, &weights)?;
    let pred: Vec<usize> = dists.iter().map(|d| argmax(d)).collect();
    Ok((loss, macro_f1(&pred, &labels, model.num_classes())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Weighted training NLL under dropout, without the penalty.
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_macro_f1: f64,
    pub improved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

fn diverged(epoch: usize, loss: f64) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { .. } => Error::Diverged { epoch, loss },
        other => other,
    }
}

/// One optimizer step over `batch`; returns the batch's NLL and weight.
fn train_batch<M: ReviewModel>(
    model: &mut M,
    reviews: &[IndexedReview],
    batch: &Batch,
    config: &TrainConfig,
    state: &mut AdadeltaState,
    seed: u64,
) -> Result<Option<(f64, f64)>> {
    let labels: Vec<usize> = batch.indices.iter().map(|&i| reviews[i].label).collect();
    let weights: Vec<f64> = batch.indices.iter().map(|&i| reviews[i].weight).collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Ok(None);
    }
    let regularized = model.regularized();
    let (nll, grads) = {
        let mut tape = Tape::new(model.params(), Mode::Train, seed);
        let mut dists = Vec::with_capacity(batch.indices.len());
        for &i in &batch.indices {
            dists.push(model.review_distribution(&mut tape, &reviews[i], batch.pad_to)?);
        }
        let nll = nll_loss(&mut tape, &dists, &labels, &weights)?;
        let nll_value = tape.value(nll).item();
        let loss = match l2_penalty(&mut tape, &regularized, config.l2)? {
            Some(p) => tape.add(nll, p)?,
            None => nll,
        };
        (nll_value, tape.backward(loss)?)
    };
    state.step(model.params_mut(), &grads)?;
    Ok(Some((nll, total)))
}

/// Trains with Adadelta, evaluating the validation loss after each epoch.
///
/// On return the model holds the parameters of the epoch with the lowest
/// validation loss. A non-finite loss aborts with [`Error::Diverged`].
pub fn train<M: ReviewModel>(
    model: &mut M,
    train: &[IndexedReview],
    validation: &[IndexedReview],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if validation.is_empty() {
        return Err(Error::invalid("training needs a nonempty validation split"));
    }
    let plan = make_batches(train, config.batch_size)?;
    let mut state = AdadeltaState::new(model.params(), config.optimizer)?;
    let mut best: Option<(f64, usize, ParamSet)> = None;
    let mut since_best = 0;
    let mut epochs = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        let (mut loss_sum, mut weight_sum) = (0.0, 0.0);
        for (step, b) in plan.epoch_order(config.seed, epoch).into_iter().enumerate() {
            let seed = derive_seed(derive_seed(config.seed, epoch as u64), step as u64 + 1);
            let res = train_batch(model, train, &plan.batches[b], config, &mut state, seed)
                .map_err(diverged(epoch, f64::NAN))?;
            if let Some((nll, w)) = res {
                if !nll.is_finite() {
                    return Err(Error::Diverged { epoch, loss: nll });
                }
                loss_sum += nll * w;
                weight_sum += w;
            }
        }
        let train_loss = if weight_sum > 0.0 { loss_sum / weight_sum } else { 0.0 };
        let (val_loss, val_macro_f1) =
            evaluate_reviews(model, validation).map_err(diverged(epoch, f64::NAN))?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: val_loss });
        }
        let improved = best.as_ref().is_none_or(|(b, _, _)| val_loss < *b);
        if improved {
            best = Some((val_loss, epoch, model.params().clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        epochs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            val_macro_f1,
            improved,
        });
        if since_best > config.patience {
            stopped_early = true;
            break;
        }
    }
    let (best_val_loss, best_epoch, params) = best.expect("at least one epoch");
    model.params_mut().copy_values_from(&params)?;
    Ok(TrainOutcome {
        epochs,
        best_epoch,
        best_val_loss,
        stopped_early,
    })
}

#[cfg(test)]
mod tests;
