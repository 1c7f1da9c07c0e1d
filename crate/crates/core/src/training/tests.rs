use super::*;
use crate::corpus::{generate_synthetic, SyntheticSpec, Vocabulary};
use crate::diffcore::Tensor;
use crate::encoders::{CnnConfig, Nonlinearity};
use crate::milnet::{AggregationKind, MilNet, MilSpec};

fn review(m: usize, label: usize, weight: f64) -> IndexedReview {
    IndexedReview {
        segments: vec![vec![2]; m],
        label,
        weight,
    }
}

#[test]
fn batches_cover_each_review_once() {
    let reviews: Vec<IndexedReview> = [3, 1, 4, 1, 5].iter().map(|&m| review(m, 0, 1.0)).collect();
    let plan = make_batches(&reviews, 2).unwrap();
    let sizes: Vec<usize> = plan.batches.iter().map(|b| b.indices.len()).collect();
    assert_eq!(sizes, vec![2, 2, 1]);
    for pair in plan.batches.windows(2) {
        let next_min = pair[1].indices.iter().map(|&i| reviews[i].num_segments()).min().unwrap();
        assert!(pair[0].pad_to <= next_min);
    }
    let mut seen: Vec<usize> = plan.batches.iter().flat_map(|b| b.indices.clone()).collect();
    seen.sort();
    assert_eq!(seen, vec![0, 1, 2, 3, 4]);
    let mut order = plan.epoch_order(7, 3);
    assert_eq!(order, plan.epoch_order(7, 3));
    order.sort();
    assert_eq!(order, vec![0, 1, 2]);
    assert!(make_batches(&[], 2).is_err());
}

#[test]
fn nll_examples() {
    let uniform = vec![vec![0.2; 5]; 3];
    let v = nll_value(&uniform, &[0, 3, 4], &[1.0; 3]).unwrap();
    assert!((v - 5f64.ln()).abs() < 1e-12);
    assert_eq!(nll_value(&[vec![0.0, 1.0]], &[1], &[1.0]).unwrap(), 0.0);
    // -(2 ln 0.8 + 1 ln 0.25) / 3
    let v = nll_value(&[vec![0.8, 0.2], vec![0.75, 0.25]], &[0, 1], &[2.0, 1.0]).unwrap();
    assert!((v + (2.0 * 0.8f64.ln() + 0.25f64.ln()) / 3.0).abs() < 1e-12);
    assert!(nll_value(&uniform, &[0, 0, 0], &[0.0; 3]).is_err());
}

#[test]
fn tape_loss_matches_values_and_penalty() {
    let mut params = ParamSet::new();
    let w = params.add("w", Tensor::vector(vec![1.0, -2.0]), true).unwrap();
    let mut tape = Tape::new(&params, Mode::Train, 0);
    let d1 = tape.constant(Tensor::vector(vec![0.8, 0.2]));
    let d2 = tape.constant(Tensor::vector(vec![0.75, 0.25]));
    let nll = nll_loss(&mut tape, &[d1, d2], &[0, 1], &[2.0, 1.0]).unwrap();
    let plain = nll_value(&[vec![0.8, 0.2], vec![0.75, 0.25]], &[0, 1], &[2.0, 1.0]).unwrap();
    assert!((tape.value(nll).item() - plain).abs() < 1e-15);
    let pen = l2_penalty(&mut tape, &[w], 0.1).unwrap().unwrap();
    assert!((tape.value(pen).item() - 0.5).abs() < 1e-15);
    let total = tape.add(nll, pen).unwrap();
    let g = tape.backward(total).unwrap();
    assert_eq!(g.get(w).data(), &[0.2, -0.4]);
}

/// A bag-independent model: `softmax(logits)` for every review.
struct Prior {
    params: ParamSet,
    logits: ParamId,
}

impl Prior {
    fn new(classes: usize) -> Self {
        let mut params = ParamSet::new();
        let logits = params.add("logits", Tensor::zeros(&[classes]), true).unwrap();
        Prior { params, logits }
    }
}

impl ReviewModel for Prior {
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
    fn num_classes(&self) -> usize {
        self.params.tensor(self.logits).len()
    }
    fn review_distribution(&self, tape: &mut Tape, _: &IndexedReview, _: usize) -> Result<Var> {
        let l = tape.param(self.logits);
        tape.softmax(l)
    }
    fn regularized(&self) -> Vec<ParamId> {
        vec![self.logits]
    }
}

fn prior_config(patience: usize) -> TrainConfig {
    TrainConfig {
        max_epochs: 20,
        patience,
        optimizer: AdadeltaConfig {
            learning_rate: 1.0,
            ..AdadeltaConfig::default()
        },
        batch_size: 4,
        ..TrainConfig::default()
    }
}

#[test]
fn patience_zero_stops_at_first_non_improving_epoch() {
    // Training pulls toward class 0 while validation wants class 1, so only
    // the first epoch improves.
    let train_set: Vec<IndexedReview> = (0..8).map(|_| review(1, 0, 1.0)).collect();
    let val: Vec<IndexedReview> = (0..4).map(|_| review(1, 1, 1.0)).collect();
    let mut model = Prior::new(2);
    let out = train(&mut model, &train_set, &val, &prior_config(0)).unwrap();
    assert_eq!(out.epochs.len(), 2);
    assert!(out.stopped_early);
    assert_eq!(out.best_epoch, 1);
    assert!(out.epochs[1].val_loss > out.epochs[0].val_loss);
    let (restored, _) = evaluate_reviews(&model, &val).unwrap();
    assert_eq!(restored, out.best_val_loss);
}

#[test]
fn best_checkpoint_is_restored_not_the_last() {
    let train_set: Vec<IndexedReview> = (0..8).map(|_| review(1, 0, 1.0)).collect();
    let val: Vec<IndexedReview> = (0..4).map(|_| review(1, 1, 1.0)).collect();
    let mut model = Prior::new(2);
    let out = train(&mut model, &train_set, &val, &prior_config(3)).unwrap();
    assert_eq!(out.epochs.len(), 5);
    let (restored, _) = evaluate_reviews(&model, &val).unwrap();
    assert_eq!(restored, out.epochs[0].val_loss);
    assert!(restored < out.epochs.last().unwrap().val_loss);
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    let bad = TrainConfig {
        patience: 50,
        ..TrainConfig::default()
    };
    assert!(bad.validate().is_err());
    let parsed: TrainConfig = toml::from_str("max_epochs = 5\npatience = 2\n").unwrap();
    assert_eq!(parsed.batch_size, 200);
    assert!(toml::from_str::<TrainConfig>("epochs = 5").is_err());
}

fn small_mil(vocab: usize, kind: AggregationKind) -> MilSpec {
    MilSpec {
        num_classes: 2,
        vocab_size: vocab,
        embed_dim: 12,
        cnn: CnnConfig {
            kernel_widths: vec![2, 3],
            feature_maps: 8,
            nonlinearity: Nonlinearity::Relu,
        },
        gru_hidden: 6,
        attention_dim: 6,
        aggregation: kind,
        ..MilSpec::default()
    }
}

fn separable() -> (Vocabulary, Vec<IndexedReview>, Vec<IndexedReview>) {
    let spec = SyntheticSpec {
        train_reviews: 120,
        validation_reviews: 60,
        test_reviews: 0,
        min_segments: 2,
        max_segments: 4,
        witness_rate: 1.0,
        seed: 3,
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec).unwrap();
    let vocab = Vocabulary::build(&data.train, 1);
    let tr = vocab.index_corpus(&data.train);
    let va = vocab.index_corpus(&data.validation);
    (vocab, tr, va)
}

#[test]
fn separable_corpus_is_learned() {
    let (vocab, tr, va) = separable();
    let mut model = MilNet::new(small_mil(vocab.len(), AggregationKind::SigmoidAttention), None, 1).unwrap();
    let config = TrainConfig {
        max_epochs: 50,
        patience: 10,
        optimizer: AdadeltaConfig {
            learning_rate: 1.0,
            ..AdadeltaConfig::default()
        },
        batch_size: 20,
        seed: 2,
        ..TrainConfig::default()
    };
    let out = train(&mut model, &tr, &va, &config).unwrap();
    let best = out.epochs.iter().find(|e| e.epoch == out.best_epoch).unwrap();
    assert!(best.val_macro_f1 >= 0.95, "{out:?}");
}

#[test]
fn seeded_training_is_reproducible() {
    let (vocab, tr, va) = separable();
    let config = TrainConfig {
        max_epochs: 3,
        patience: 1,
        optimizer: AdadeltaConfig {
            learning_rate: 1.0,
            ..AdadeltaConfig::default()
        },
        batch_size: 32,
        seed: 5,
        ..TrainConfig::default()
    };
    let run = || {
        let mut m = MilNet::new(small_mil(vocab.len(), AggregationKind::SoftmaxAttention), None, 4).unwrap();
        let out = train(&mut m, &tr, &va, &config).unwrap();
        (out, crate::diffcore::checkpoint::encode_params(m.params()))
    };
    assert_eq!(run(), run());
}
