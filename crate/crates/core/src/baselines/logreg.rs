use serde::{Deserialize, Serialize};

use crate::diffcore::{softmax_in_place, AdadeltaConfig, AdadeltaState, Mode, ParamSet, SparseRows, Tape, Tensor};
use crate::error::{Error, Result};

/// Design matrix rows: dense vectors or sparse `(column, value)` lists.
#[derive(Clone, Debug, PartialEq)]
pub enum Features {
    Dense(Vec<Vec<f64>>),
    Sparse { dim: usize, rows: Vec<Vec<(usize, f64)>> },
}

impl Features {
    pub fn len(&self) -> usize {
        match self {
            Features::Dense(rows) => rows.len(),
            Features::Sparse { rows, .. } => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            Features::Dense(rows) => rows.first().map_or(0, Vec::len),
            Features::Sparse { dim, .. } => *dim,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegConfig {
    pub l2: f64,
    pub max_iterations: usize,
    /// Stop once the gradient norm falls below this.
    pub tolerance: f64,
    pub optimizer: AdadeltaConfig,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            l2: 1e-5,
            max_iterations: 3000,
            tolerance: 1e-5,
            optimizer: AdadeltaConfig {
                learning_rate: 1.0,
                ..AdadeltaConfig::default()
            },
        }
    }
}

/// Multinomial logistic regression: `softmax(W x + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogReg {
    /// `[C, D]`.
    pub weights: Tensor,
    pub bias: Vec<f64>,
    pub l2: f64,
}

impl LogReg {
    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn predict_dense(&self, x: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = (0..self.num_classes())
            .map(|c| self.bias[c] + self.weights.row(c).iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        softmax_in_place(&mut z);
        z
    }

    pub fn predict_sparse(&self, x: &[(usize, f64)]) -> Vec<f64> {
        let mut z: Vec<f64> = (0..self.num_classes())
            .map(|c| {
                let row = self.weights.row(c);
                self.bias[c] + x.iter().map(|&(j, v)| row[j] * v).sum::<f64>()
            })
            .collect();
        softmax_in_place(&mut z);
        z
    }
}

/// Training outcome details.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegFit {
    pub iterations: usize,
    pub objective: f64,
    pub gradient_norm: f64,
}

/// `Σ w ℓ / Σ w + λ ‖W‖²` at the given parameters.
fn objective(
    params: &ParamSet,
    x: &Features,
    targets: &Tensor,
    l2: f64,
    mode: Mode,
) -> Result<(f64, Option<crate::diffcore::Gradients>)> {
    let mut tape = Tape::new(params, mode, 0);
    let (wid, bid) = (params.id("w")?, params.id("b")?);
    let w = tape.param(wid);
    let b = tape.param(bid);
    let logits = match x {
        Features::Dense(rows) => {
            let d = w_cols(params, wid);
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let xm = tape.constant(Tensor::matrix(rows.len(), d, flat)?);
            tape.matmul_t(xm, w)?
        }
        Features::Sparse { dim, rows } => tape.sparse_matmul_t(
            SparseRows {
                cols: *dim,
                rows: rows.clone(),
            },
            w,
        )?,
    };
    let logits = tape.add_bias(logits, b)?;
    let p = tape.softmax(logits)?;
    let lp = tape.log(p)?;
    let t = tape.constant(targets.clone());
    let picked = tape.mul(lp, t)?;
    let nll = tape.sum(picked)?;
    let mut loss = tape.scale(nll, -1.0)?;
    if l2 > 0.0 {
        let sq = tape.mul(w, w)?;
        let s = tape.sum(sq)?;
        let pen = tape.scale(s, l2)?;
        loss = tape.add(loss, pen)?;
    }
    let value = tape.value(loss).item();
    let grads = if mode == Mode::Train {
        Some(tape.backward(loss)?)
    } else {
        None
    };
    Ok((value, grads))
}

fn w_cols(params: &ParamSet, id: crate::diffcore::ParamId) -> usize {
    params.tensor(id).cols()
}

/// Minimizes the sample-weighted NLL plus `l2 ‖W‖²` with full-batch
/// Adadelta (learning rate halved whenever the objective rises), until the gradient norm drops below the tolerance or the
/// iteration cap is reached.
pub fn train_logreg(
    x: &Features,
    labels: &[usize],
    weights: &[f64],
    num_classes: usize,
    config: &LogRegConfig,
) -> Result<(LogReg, LogRegFit)> {
    if x.len() != labels.len() || x.len() != weights.len() || x.is_empty() {
        return Err(Error::invalid("features, labels and weights must be nonempty and aligned"));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(Error::LabelOutOfRange {
            label: y,
            classes: num_classes,
        });
    }
    let mut present = vec![false; num_classes];
    labels.iter().for_each(|&y| present[y] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::invalid("logistic regression needs at least two classes in the data"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("zero total sample weight"));
    }
    let mut targets = Tensor::zeros(&[x.len(), num_classes]);
    for (i, (&y, &w)) in labels.iter().zip(weights).enumerate() {
        targets.data_mut()[i * num_classes + y] = w / total;
    }
    let mut params = ParamSet::new();
    params.add("w", Tensor::zeros(&[num_classes, x.dim()]), true)?;
    params.add("b", Tensor::zeros(&[num_classes]), true)?;
    let mut opt = AdadeltaState::new(&params, config.optimizer)?;
    let mut fit = LogRegFit {
        iterations: 0,
        objective: f64::NAN,
        gradient_norm: f64::INFINITY,
    };
    let mut lr = config.optimizer.learning_rate;
    let mut previous = f64::INFINITY;
    for it in 0..config.max_iterations {
        let (value, grads) = objective(&params, x, &targets, config.l2, Mode::Train)?;
        let grads = grads.expect("train mode");
        // Adadelta keeps its step size through an oscillation; damp it.
        if value > previous {
            lr *= 0.5;
            opt.set_learning_rate(lr);
        }
        previous = value;
        fit = LogRegFit {
            iterations: it,
            objective: value,
            gradient_norm: grads.global_norm(),
        };
        if fit.gradient_norm < config.tolerance {
            break;
        }
        opt.step(&mut params, &grads)?;
        fit.iterations = it + 1;
    }
    if fit.iterations == config.max_iterations {
        let (value, _) = objective(&params, x, &targets, config.l2, Mode::Eval)?;
        fit.objective = value;
    }
    let model = LogReg {
        weights: params.tensor(params.id("w")?).clone(),
        bias: params.tensor(params.id("b")?).data().to_vec(),
        l2: config.l2,
    };
    Ok((model, fit))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Features, Vec<usize>, Vec<f64>) {
        let rows = vec![
            vec![1.0, 0.2],
            vec![0.8, -0.1],
            vec![0.3, 0.9],
            vec![-0.5, 1.0],
            vec![-1.0, -0.3],
            vec![0.1, -0.8],
        ];
        (Features::Dense(rows), vec![0, 0, 1, 1, 2, 0], vec![1.0, 2.0, 1.0, 0.5, 1.0, 1.0])
    }

    /// Plain batch gradient descent on the same objective.
    fn gd_oracle(rows: &[Vec<f64>], y: &[usize], w: &[f64], c: usize, l2: f64) -> f64 {
        let d = rows[0].len();
        let total: f64 = w.iter().sum();
        let mut wm = vec![vec![0.0; d]; c];
        let mut b = vec![0.0; c];
        let eval = |wm: &Vec<Vec<f64>>, b: &Vec<f64>| {
            let mut loss = 0.0;
            let mut gw = vec![vec![0.0; d]; c];
            let mut gb = vec![0.0; c];
            for ((x, &yi), &wi) in rows.iter().zip(y).zip(w) {
                let z: Vec<f64> = (0..c).map(|k| b[k] + (0..d).map(|j| wm[k][j] * x[j]).sum::<f64>()).collect();
                let m = z.iter().cloned().fold(f64::MIN, f64::max);
                let s: f64 = z.iter().map(|v| (v - m).exp()).sum();
                loss -= wi / total * (z[yi] - m - s.ln());
                for k in 0..c {
                    let p = (z[k] - m).exp() / s;
                    let g = wi / total * (p - (k == yi) as u8 as f64);
                    gb[k] += g;
                    for j in 0..d {
                        gw[k][j] += g * x[j];
                    }
                }
            }
            for k in 0..c {
                for j in 0..d {
                    loss += l2 * wm[k][j] * wm[k][j];
                    gw[k][j] += 2.0 * l2 * wm[k][j];
                }
            }
            (loss, gw, gb)
        };
        let mut loss = 0.0;
        for _ in 0..20000 {
            let (l, gw, gb) = eval(&wm, &b);
            loss = l;
            for k in 0..c {
                b[k] -= 0.5 * gb[k];
                for j in 0..d {
                    wm[k][j] -= 0.5 * gw[k][j];
                }
            }
        }
        loss
    }

    #[test]
    fn matches_gradient_descent_optimum() {
        let (x, y, w) = toy();
        let config = LogRegConfig {
            l2: 0.05,
            max_iterations: 20000,
            ..LogRegConfig::default()
        };
        let (_, fit) = train_logreg(&x, &y, &w, 3, &config).unwrap();
        let Features::Dense(rows) = &x else { unreachable!() };
        let oracle = gd_oracle(rows, &y, &w, 3, 0.05);
        assert!((fit.objective - oracle).abs() < 1e-4, "{} vs {oracle}", fit.objective);
    }

    #[test]
    fn separable_toy_is_fit() {
        let x = Features::Dense(vec![vec![1.0, 1.0], vec![2.0, 1.5], vec![-1.0, -1.0], vec![-2.0, -0.5]]);
        let y = [1, 1, 0, 0];
        let (m, _) = train_logreg(&x, &y, &[1.0; 4], 2, &LogRegConfig::default()).unwrap();
        let Features::Dense(rows) = &x else { unreachable!() };
        for (r, &yi) in rows.iter().zip(&y) {
            assert_eq!(crate::diffcore::argmax(&m.predict_dense(r)), yi);
        }
    }

    #[test]
    fn heavy_penalty_predicts_priors() {
        let (x, y, _) = toy();
        let config = LogRegConfig {
            l2: 100.0,
            max_iterations: 20000,
            ..LogRegConfig::default()
        };
        let (m, _) = train_logreg(&x, &y, &[1.0; 6], 3, &config).unwrap();
        assert!(m.weights.data().iter().all(|w| w.abs() < 5e-3), "{:?}", m.weights);
        let p = m.predict_dense(&[0.7, 0.7]);
        for (got, want) in p.iter().zip([0.5, 2.0 / 6.0, 1.0 / 6.0]) {
            assert!((got - want).abs() < 1e-2, "{p:?}");
        }
    }

    #[test]
    fn sparse_and_dense_agree() {
        let dense = Features::Dense(vec![vec![1.0, 0.0, 0.5], vec![0.0, 2.0, 0.0], vec![0.3, 0.0, 0.0]]);
        let sparse = Features::Sparse {
            dim: 3,
            rows: vec![vec![(0, 1.0), (2, 0.5)], vec![(1, 2.0)], vec![(0, 0.3)]],
        };
        let y = [0, 1, 1];
        let c = LogRegConfig {
            max_iterations: 50,
            ..LogRegConfig::default()
        };
        let (a, _) = train_logreg(&dense, &y, &[1.0; 3], 2, &c).unwrap();
        let (b, _) = train_logreg(&sparse, &y, &[1.0; 3], 2, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.predict_dense(&[1.0, 0.0, 0.5]), a.predict_sparse(&[(0, 1.0), (2, 0.5)]));
    }

    #[test]
    fn single_class_is_rejected() {
        let (x, _, w) = toy();
        assert!(train_logreg(&x, &[1; 6], &w, 3, &LogRegConfig::default()).is_err());
    }
}
