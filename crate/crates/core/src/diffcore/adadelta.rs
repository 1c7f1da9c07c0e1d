use serde::{Deserialize, Serialize};

use super::{Gradients, ParamSet, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdadeltaConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    /// Rescale the gradient when its global norm exceeds this value.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        AdadeltaConfig {
            learning_rate: 0.005,
            rho: 0.95,
            epsilon: 1e-6,
            clip_norm: None,
        }
    }
}

impl AdadeltaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho {} outside [0, 1)", self.rho)));
        }
        if self.epsilon <= 0.0 || self.learning_rate <= 0.0 {
            return Err(Error::Config("epsilon and learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Running averages of squared gradients and squared updates, one pair per
/// parameter.
///
/// Per component, with gradient `g`:
///
/// ```text
/// E[g²]  ← ρ·E[g²] + (1-ρ)·g²
/// Δ      ← sqrt(E[Δ²] + ε) / sqrt(E[g²] + ε) · g
/// E[Δ²]  ← ρ·E[Δ²] + (1-ρ)·Δ²
/// θ      ← θ - lr·Δ
/// ```
#[derive(Clone, Debug)]
pub struct AdadeltaState {
    config: AdadeltaConfig,
    sq_grad: Vec<Tensor>,
    sq_update: Vec<Tensor>,
    steps: usize,
}

impl AdadeltaState {
    pub fn new(params: &ParamSet, config: AdadeltaConfig) -> Result<Self> {
        config.validate()?;
        let zeros: Vec<Tensor> = params.iter().map(|(_, p)| Tensor::zeros(p.tensor.shape())).collect();
        Ok(AdadeltaState {
            config,
            sq_grad: zeros.clone(),
            sq_update: zeros,
            steps: 0,
        })
    }

    pub fn config(&self) -> &AdadeltaConfig {
        &self.config
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn squared_grad_average(&self) -> &[Tensor] {
        &self.sq_grad
    }

    pub fn squared_update_average(&self) -> &[Tensor] {
        &self.sq_update
    }

    /// Applies one update to every trainable parameter.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) -> Result<()> {
        if grads.len() != params.len() || self.sq_grad.len() != params.len() {
            return Err(Error::invalid(format!(
                "adadelta: {} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        let clip = match self.config.clip_norm {
            Some(max) => {
                let norm = grads.global_norm();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let AdadeltaConfig {
            learning_rate: lr,
            rho,
            epsilon: eps,
            ..
        } = self.config;

        for (id, param) in params.iter_mut() {
            if !param.trainable {
                continue;
            }
            let g = grads.get(id);
            let (eg, ed) = (&mut self.sq_grad[id.index()], &mut self.sq_update[id.index()]);
            if g.shape() != param.tensor.shape() || eg.shape() != param.tensor.shape() {
                return Err(Error::shape("adadelta", eg.shape(), g.shape()));
            }
            let values = param.tensor.data_mut();
            for (((w, &gi), a), d) in values
                .iter_mut()
                .zip(g.data())
                .zip(eg.data_mut())
                .zip(ed.data_mut())
            {
                let gi = gi * clip;
                *a = rho * *a + (1.0 - rho) * gi * gi;
                let delta = ((*d + eps).sqrt() / (*a + eps).sqrt()) * gi;
                *d = rho * *d + (1.0 - rho) * delta * delta;
                *w -= lr * delta;
            }
        }
        self.steps += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{Mode, Tape};

    fn quadratic_params(w0: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::vector(vec![w0]), true).unwrap();
        ps
    }

    fn loss_and_grad(ps: &ParamSet) -> (f64, Gradients) {
        // f(w) = (w - 3)²
        let mut tape = Tape::new(ps, Mode::Eval, 0);
        let w = tape.param(ps.id("w").unwrap());
        let three = tape.constant(Tensor::vector(vec![3.0]));
        let d = tape.sub(w, three).unwrap();
        let sq = tape.mul(d, d).unwrap();
        let loss = tape.sum(sq).unwrap();
        let value = tape.value(loss).item();
        (value, tape.backward(loss).unwrap())
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut ps = quadratic_params(1.5);
        let mut state = AdadeltaState::new(&ps, AdadeltaConfig::default()).unwrap();
        let grads = Gradients::zeros_like(&ps);
        state.step(&mut ps, &grads).unwrap();
        assert_eq!(ps.by_name("w").unwrap().tensor.data(), &[1.5]);
    }

    #[test]
    fn quadratic_loss_decreases_over_200_steps() {
        let mut ps = quadratic_params(0.0);
        let mut state = AdadeltaState::new(&ps, AdadeltaConfig::default()).unwrap();
        let mut losses = Vec::new();
        for _ in 0..200 {
            let (loss, grads) = loss_and_grad(&ps);
            losses.push(loss);
            state.step(&mut ps, &grads).unwrap();
        }
        let (final_loss, _) = loss_and_grad(&ps);
        assert!(final_loss < losses[0]);
        for pair in losses.windows(2) {
            assert!(pair[1] < pair[0], "loss went {} -> {}", pair[0], pair[1]);
        }
    }

    #[test]
    fn zero_rho_steps_against_gradient_sign() {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::vector(vec![0.0, 0.0, 0.0]), true).unwrap();
        let config = AdadeltaConfig {
            rho: 0.0,
            ..AdadeltaConfig::default()
        };
        let mut state = AdadeltaState::new(&ps, config).unwrap();
        let mut grads = Gradients::zeros_like(&ps);
        grads
            .get_mut(ps.id("w").unwrap())
            .data_mut()
            .copy_from_slice(&[4.0, -0.01, 250.0]);
        state.step(&mut ps, &grads).unwrap();
        let w = ps.by_name("w").unwrap().tensor.data().to_vec();
        assert!(w[0] < 0.0 && w[1] > 0.0 && w[2] < 0.0);
        // Magnitudes collapse to lr·sqrt(ε)·|g|/sqrt(g²+ε) ≈ lr·sqrt(ε).
        let expected = 0.005 * 1e-3;
        assert!((w[0].abs() - expected).abs() < 1e-9);
        assert!((w[2].abs() - expected).abs() < 1e-9);
    }

    #[test]
    fn accumulators_stay_nonnegative() {
        let mut ps = quadratic_params(-2.0);
        let mut state = AdadeltaState::new(&ps, AdadeltaConfig::default()).unwrap();
        for _ in 0..20 {
            let (_, grads) = loss_and_grad(&ps);
            state.step(&mut ps, &grads).unwrap();
        }
        for t in state.squared_grad_average().iter().chain(state.squared_update_average()) {
            assert!(t.data().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn invalid_rho_rejected() {
        let ps = quadratic_params(0.0);
        let config = AdadeltaConfig {
            rho: 1.0,
            ..AdadeltaConfig::default()
        };
        assert!(AdadeltaState::new(&ps, config).is_err());
    }

    #[test]
    fn mismatched_gradient_rejected() {
        let mut ps = quadratic_params(0.0);
        let mut state = AdadeltaState::new(&ps, AdadeltaConfig::default()).unwrap();
        let other = ParamSet::new();
        assert!(state.step(&mut ps, &Gradients::zeros_like(&other)).is_err());
    }
}
