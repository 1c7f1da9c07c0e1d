use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::check_gradients;
use super::*;
use crate::error::Error;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn sigmoid_of_zero_is_half() {
    let ps = ParamSet::new();
    let mut tape = Tape::new(&ps, Mode::Eval, 0);
    let x = tape.constant(Tensor::scalar(0.0));
    let y = tape.sigmoid(x).unwrap();
    assert_eq!(tape.value(y).item(), 0.5);
}

#[test]
fn softmax_of_equal_scores_is_uniform() {
    let ps = ParamSet::new();
    let mut tape = Tape::new(&ps, Mode::Eval, 0);
    let x = tape.constant(Tensor::vector(vec![0.0, 0.0, 0.0]));
    let y = tape.softmax(x).unwrap();
    for &v in tape.value(y).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

/// Direct triple loop over (time, map, window offset × channel).
fn naive_conv(x: &[Vec<f64>], kernel: &[Vec<Vec<f64>>], bias: &[f64]) -> Vec<Vec<f64>> {
    let width = kernel.len();
    let maps = bias.len();
    (0..=x.len() - width)
        .map(|t| {
            (0..maps)
                .map(|f| {
                    let mut acc = bias[f];
                    for (j, krow) in kernel.iter().enumerate() {
                        for (c, kc) in krow.iter().enumerate() {
                            acc += x[t + j][c] * kc[f];
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

#[test]
fn conv_all_ones_matches_naive_oracle() {
    let x = vec![vec![1.0, 1.0]; 5];
    let kernel = vec![vec![vec![1.0]; 2]; 3];
    let expected = naive_conv(&x, &kernel, &[0.0]);
    assert_eq!(expected, vec![vec![6.0]; 3]);

    let ps = ParamSet::new();
    let mut tape = Tape::new(&ps, Mode::Eval, 0);
    let xv = tape.constant(Tensor::matrix(5, 2, vec![1.0; 10]).unwrap());
    let kv = tape.constant(Tensor::new(vec![3, 2, 1], vec![1.0; 6]).unwrap());
    let bv = tape.constant(Tensor::vector(vec![0.0]));
    let y = tape.conv1d(xv, kv, bv).unwrap();
    assert_eq!(tape.value(y).shape(), &[3, 1]);
    assert_eq!(tape.value(y).data(), &[6.0, 6.0, 6.0]);
}

#[test]
fn conv_random_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (len, ch, width, maps) = (7, 4, 3, 5);
    let x: Vec<Vec<f64>> = (0..len).map(|_| (0..ch).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let kernel: Vec<Vec<Vec<f64>>> = (0..width)
        .map(|_| (0..ch).map(|_| (0..maps).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect())
        .collect();
    let bias: Vec<f64> = (0..maps).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let expected = naive_conv(&x, &kernel, &bias);

    let ps = ParamSet::new();
    let mut tape = Tape::new(&ps, Mode::Eval, 0);
    let xv = tape.constant(Tensor::matrix(len, ch, x.concat()).unwrap());
    let kv = tape.constant(Tensor::new(vec![width, ch, maps], kernel.concat().concat()).unwrap());
    let bv = tape.constant(Tensor::vector(bias));
    let y = tape.conv1d(xv, kv, bv).unwrap();
    for (got, want) in tape.value(y).data().iter().zip(expected.concat()) {
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn shape_errors_name_the_primitive() {
    let ps = ParamSet::new();
    let mut tape = Tape::new(&ps, Mode::Eval, 0);
    let a = tape.constant(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
    let b = tape.constant(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
    let err = tape.matmul(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("matmul") && msg.contains("[2, 3]"), "{msg}");
    let v = tape.constant(Tensor::vector(vec![1.0, 2.0]));
    assert!(tape.add(a, v).unwrap_err().to_string().contains("add"));
}

#[test]
fn grad_of_sum_of_squares() {
    let mut ps = ParamSet::new();
    let id = ps.add("w", Tensor::vector(vec![1.0, 2.0]), true).unwrap();
    let mut tape = Tape::new(&ps, Mode::Eval, 0);
    let w = tape.param(id);
    let sq = tape.mul(w, w).unwrap();
    let loss = tape.sum(sq).unwrap();
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.by_name("w").unwrap().data(), &[2.0, 4.0]);
}

#[test]
fn grad_of_sigmoid_dot() {
    let mut ps = ParamSet::new();
    let id = ps.add("w", Tensor::vector(vec![0.0]), true).unwrap();
    let mut tape = Tape::new(&ps, Mode::Eval, 0);
    let w = tape.param(id);
    let x = tape.constant(Tensor::vector(vec![3.0]));
    let z = tape.matmul(w, x).unwrap();
    let loss = tape.sigmoid(z).unwrap();
    let grads = tape.backward(loss).unwrap();
    assert!((grads.get(id).data()[0] - 0.75).abs() < 1e-15);
}

#[test]
fn unreached_and_frozen_parameters_get_zero_gradient() {
    let mut ps = ParamSet::new();
    let used = ps.add("used", Tensor::vector(vec![1.0]), true).unwrap();
    let unused = ps.add("unused", Tensor::vector(vec![5.0, 6.0]), true).unwrap();
    let frozen = ps.add("frozen", Tensor::vector(vec![2.0]), false).unwrap();
    let mut tape = Tape::new(&ps, Mode::Eval, 0);
    let a = tape.param(used);
    let b = tape.param(frozen);
    let p = tape.mul(a, b).unwrap();
    let loss = tape.sum(p).unwrap();
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.get(used).data(), &[2.0]);
    assert_eq!(grads.get(unused).data(), &[0.0, 0.0]);
    assert_eq!(grads.get(frozen).data(), &[0.0]);
}

#[test]
fn backward_errors() {
    let mut ps = ParamSet::new();
    let id = ps.add("w", Tensor::vector(vec![1.0, 2.0]), true).unwrap();
    let mut tape = Tape::new(&ps, Mode::Eval, 0);
    let w = tape.param(id);
    assert!(matches!(tape.backward(w), Err(Error::NonScalarLoss(_))));
    let s = tape.sum(w).unwrap();
    tape.backward(s).unwrap();
    assert!(matches!(tape.backward(s), Err(Error::TapeConsumed)));

    let mut inf = Tape::inference(&ps);
    let w = inf.param(id);
    let s = inf.sum(w).unwrap();
    assert!(matches!(inf.backward(s), Err(Error::NotRecording)));
}

#[test]
fn log_of_zero_is_reported() {
    let ps = ParamSet::new();
    let mut tape = Tape::new(&ps, Mode::Eval, 0);
    let x = tape.constant(Tensor::vector(vec![0.0]));
    assert!(matches!(tape.log(x), Err(Error::NonFinite { op: "log" })));
}

#[test]
fn dropout_is_identity_in_eval_mode() {
    let ps = ParamSet::new();
    let mut tape = Tape::new(&ps, Mode::Eval, 0);
    let x = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
    let y = tape.dropout(x, 0.5).unwrap();
    assert_eq!(x, y);
}

#[test]
fn dropout_preserves_expectation_in_train_mode() {
    let ps = ParamSet::new();
    let mut tape = Tape::new(&ps, Mode::Train, 11);
    let n = 200_000;
    let x = tape.constant(Tensor::filled(&[n], 2.0));
    let y = tape.dropout(x, 0.5).unwrap();
    let values = tape.value(y).data();
    let mean = values.iter().sum::<f64>() / n as f64;
    assert!((mean - 2.0).abs() < 0.02, "mean {mean}");
    assert!(values.iter().all(|&v| v == 0.0 || v == 4.0));
}

/// Builds a loss touching every primitive with a backward rule.
fn composite_loss(tape: &mut Tape, ids: &[ParamId]) -> crate::error::Result<Var> {
    let [emb, kernel, kbias, w, b, v, u] = ids else { unreachable!() };
    let table = tape.param(*emb);
    let x = tape.embedding(table, &[2, 1, 3, 2, 3, 1])?;
    let x = tape.slice_rows(x, 1, 4)?;
    let x = tape.dropout(x, 0.3)?;
    let x = tape.pad_rows(x, 1, 1)?;
    let k = tape.param(*kernel);
    let kb = tape.param(*kbias);
    let c = tape.conv1d(x, k, kb)?;
    let c = tape.relu(c)?;
    let pooled = tape.max_over_time(c)?;
    let wv = tape.param(*w);
    let bv = tape.param(*b);
    let h = tape.matmul(wv, pooled)?;
    let h = tape.add_bias(h, bv)?;
    let t = tape.tanh(h)?;
    let s = tape.sigmoid(h)?;
    let ts = tape.mul(t, s)?;
    let q = tape.sub(ts, s)?;
    let joined = tape.concat(&[q, t])?;
    let vv = tape.param(*v);
    let proj = tape.matmul_t(joined, vv)?;
    let rows = tape.stack(&[proj, t, s])?;
    let r1 = tape.row(rows, 1)?;
    let uu = tape.param(*u);
    let scores = tape.matmul(rows, uu)?;
    let att = tape.masked_softmax(scores, &[true, false, true])?;
    let sm = tape.softmax(rows)?;
    let mixed = tape.matmul(att, sm)?;
    let pooled_rows = tape.masked_mean(rows, &[true, true, false])?;
    let e = tape.exp(pooled_rows)?;
    let ratio = tape.div(mixed, e)?;
    let lg = tape.log(mixed)?;
    let total = tape.add(ratio, lg)?;
    let total = tape.add(total, r1)?;
    let total = tape.scale(total, 0.7)?;
    let ms = tape.masked_sum(total, &[true, false, true])?;
    let picked = tape.pick(total, 1)?;
    let dotted = tape.matmul(total, mixed)?;
    let out = tape.add(dotted, ms)?;
    let out = tape.add(out, picked)?;
    let out = tape.mul_scalar(out, picked)?;
    Ok(out)
}

fn composite_params(seed: u64) -> (ParamSet, Vec<ParamId>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamSet::new();
    let ids = vec![
        ps.add("emb", random_tensor(&mut rng, &[4, 5]), true).unwrap(),
        ps.add("kernel", random_tensor(&mut rng, &[3, 5, 4]), true).unwrap(),
        ps.add("kbias", random_tensor(&mut rng, &[4]), true).unwrap(),
        ps.add("w", random_tensor(&mut rng, &[3, 4]), true).unwrap(),
        ps.add("b", random_tensor(&mut rng, &[3]), true).unwrap(),
        ps.add("v", random_tensor(&mut rng, &[3, 6]), true).unwrap(),
        ps.add("u", random_tensor(&mut rng, &[3]), true).unwrap(),
    ];
    (ps, ids)
}

#[test]
fn composite_gradients_match_finite_differences() {
    for seed in 0..4 {
        let (ps, ids) = composite_params(seed);
        let report = check_gradients(&ps, Mode::Train, seed, 60, 1e-5, seed, |tape| {
            composite_loss(tape, &ids)
        })
        .unwrap();
        assert_eq!(report.components.len(), 60);
        assert!(
            report.max_relative_error() <= 1e-4,
            "seed {seed}: worst {:?}",
            report.worst()
        );
    }
}

#[test]
fn sparse_matmul_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ps = ParamSet::new();
    let w = ps.add("w", random_tensor(&mut rng, &[3, 6]), true).unwrap();
    let x = SparseRows {
        cols: 6,
        rows: vec![vec![(0, 0.5), (4, -1.0)], vec![], vec![(2, 2.0), (5, 0.25)]],
    };
    let report = check_gradients(&ps, Mode::Eval, 0, 18, 1e-5, 1, |tape| {
        let wv = tape.param(w);
        let logits = tape.sparse_matmul_t(x.clone(), wv)?;
        let p = tape.softmax(logits)?;
        let l = tape.log(p)?;
        tape.sum(l)
    })
    .unwrap();
    assert!(report.max_relative_error() <= 1e-4, "{:?}", report.worst());
}

#[test]
fn forward_and_backward_are_deterministic() {
    let (ps, ids) = composite_params(9);
    let run = || {
        let mut tape = Tape::new(&ps, Mode::Train, 42);
        let loss = composite_loss(&mut tape, &ids).unwrap();
        let value = tape.value(loss).item();
        let grads = tape.backward(loss).unwrap();
        let flat: Vec<u64> = grads.iter().flat_map(|(_, g)| g.data().iter().map(|v| v.to_bits())).collect();
        (value.to_bits(), flat)
    };
    assert_eq!(run(), run());
}

#[test]
fn masked_softmax_zeroes_masked_positions() {
    let ps = ParamSet::new();
    let mut tape = Tape::new(&ps, Mode::Eval, 0);
    let x = tape.constant(Tensor::vector(vec![5.0, 1.0, 1.0]));
    let y = tape.masked_softmax(x, &[false, true, true]).unwrap();
    assert_eq!(tape.value(y).data(), &[0.0, 0.5, 0.5]);
    assert!(tape.masked_softmax(x, &[false, false, false]).is_err());
}
