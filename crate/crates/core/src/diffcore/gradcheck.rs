//! Central finite-difference check of tape gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Mode, ParamSet, Tape, Var};
use crate::error::Result;

/// Relative-error denominators never drop below this value, so components
/// whose true gradient is ~0 are judged on absolute error instead.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub components: Vec<ComponentCheck>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.components.iter().map(|c| c.relative_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ComponentCheck> {
        self.components
            .iter()
            .max_by(|a, b| a.relative_error.total_cmp(&b.relative_error))
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares backward-pass gradients with `(f(θ+h) - f(θ-h)) / 2h` on
/// `samples` randomly chosen trainable components.
///
/// `loss` is called on a fresh tape built with `mode` and `tape_seed` every
/// time, so train-mode dropout masks are identical across evaluations.
pub fn check_gradients<F>(
    params: &ParamSet,
    mode: Mode,
    tape_seed: u64,
    samples: usize,
    step: f64,
    sample_seed: u64,
    loss: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let analytic = {
        let mut tape = Tape::new(params, mode, tape_seed);
        let l = loss(&mut tape)?;
        tape.backward(l)?
    };

    let mut candidates: Vec<(usize, usize)> = params
        .iter()
        .filter(|(_, p)| p.trainable)
        .flat_map(|(id, p)| (0..p.tensor.len()).map(move |i| (id.index(), i)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    candidates.shuffle(&mut rng);
    candidates.truncate(samples);

    let eval = |ps: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new(ps, mode, tape_seed);
        let l = loss(&mut tape)?;
        Ok(tape.value(l).item())
    };

    let mut probe = params.clone();
    let mut components = Vec::with_capacity(candidates.len());
    for (pid, index) in candidates {
        let id = params.iter().nth(pid).map(|(id, _)| id).unwrap();
        let original = params.tensor(id).data()[index];
        probe.get_mut(id).tensor.data_mut()[index] = original + step;
        let up = eval(&probe)?;
        probe.get_mut(id).tensor.data_mut()[index] = original - step;
        let down = eval(&probe)?;
        probe.get_mut(id).tensor.data_mut()[index] = original;

        let numeric = (up - down) / (2.0 * step);
        let a = analytic.get(id).data()[index];
        components.push(ComponentCheck {
            param: params.get(id).name.clone(),
            index,
            analytic: a,
            numeric,
            relative_error: relative_error(a, numeric),
        });
    }
    Ok(GradCheckReport { components })
}
