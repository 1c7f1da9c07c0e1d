use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Items per resampled test set.
pub const BOOTSTRAP_RESAMPLE: usize = 1000;
/// Redraws allowed per iteration when the metric is undefined on a resample.
pub const MAX_REDRAWS: usize = 100;

/// Linear interpolation between order statistics of sorted `values`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile-bootstrap 95% interval of `metric` over resamples (with
/// replacement) of `resample_size` items drawn from `0..n`.
///
/// Iteration `i` uses its own ChaCha stream of `seed`, so results do not
/// depend on evaluation order. `metric` returns `None` when undefined on a
/// resample, which triggers a redraw.
pub fn bootstrap_ci<F>(
    n: usize,
    resample_size: usize,
    iterations: usize,
    seed: u64,
    metric: F,
) -> Result<(f64, f64)>
where
    F: Fn(&[usize]) -> Option<f64>,
{
    if iterations < 200 {
        return Err(Error::invalid(format!("bootstrap needs >= 200 iterations, got {iterations}")));
    }
    if n == 0 || resample_size == 0 {
        return Err(Error::invalid("bootstrap over an empty set"));
    }
    let mut values = Vec::with_capacity(iterations);
    let mut sample = vec![0usize; resample_size];
    for i in 0..iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut value = None;
        for _ in 0..MAX_REDRAWS {
            sample.iter_mut().for_each(|s| *s = rng.gen_range(0..n));
            value = metric(&sample);
            if value.is_some() {
                break;
            }
        }
        values.push(value.ok_or_else(|| {
            Error::invalid(format!("metric undefined on {MAX_REDRAWS} consecutive resamples"))
        })?);
    }
    values.sort_by(f64::total_cmp);
    Ok((percentile(&values, 0.025), percentile(&values, 0.975)))
}
