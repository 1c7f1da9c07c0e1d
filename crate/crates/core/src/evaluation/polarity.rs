use crate::corpus::{NEGATIVE, NEUTRAL, POSITIVE};
use crate::error::{Error, Result};

/// Evenly spaced class weights from -1 to 1 that turn a C-class
/// distribution into a polarity score.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarityMap {
    weights: Vec<f64>,
}

impl PolarityMap {
    pub fn new(num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config(format!("polarity needs >= 2 classes, got {num_classes}")));
        }
        let top = (num_classes - 1) as f64;
        let weights = (0..num_classes).map(|c| (2 * c) as f64 / top - 1.0).collect();
        Ok(PolarityMap { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }
}

/// `g = Σ_c p^c w^c`.
pub fn polarity_score(p: &[f64], map: &PolarityMap) -> f64 {
    p.iter().zip(map.weights()).map(|(p, w)| p * w).sum()
}

/// `g' = α g`.
pub fn gate(g: f64, alpha: f64) -> f64 {
    alpha * g
}

/// Negative below `t1`, positive above `t2`, neutral otherwise (including
/// both boundaries).
pub fn apply_thresholds(g: f64, t1: f64, t2: f64) -> Result<usize> {
    if t1 > t2 {
        return Err(Error::invalid(format!("thresholds out of order: {t1} > {t2}")));
    }
    Ok(if g < t1 {
        NEGATIVE
    } else if g > t2 {
        POSITIVE
    } else {
        NEUTRAL
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn listed_weights() {
        assert_eq!(PolarityMap::new(5).unwrap().weights(), &[-1.0, -0.5, 0.0, 0.5, 1.0]);
        let ten = PolarityMap::new(10).unwrap();
        let printed = [-1.0, -0.778, -0.556, -0.333, -0.111, 0.111, 0.333, 0.556, 0.778, 1.0];
        for (w, p) in ten.weights().iter().zip(printed) {
            assert!((w - p).abs() < 5e-4, "{w} vs {p}");
        }
        assert!((ten.weights()[1] + 7.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_distribution_is_neutral() {
        for c in 2..12 {
            let map = PolarityMap::new(c).unwrap();
            let p = vec![1.0 / c as f64; c];
            assert!(polarity_score(&p, &map).abs() < 1e-15);
        }
    }

    #[test]
    fn gating_and_thresholds() {
        assert_eq!(gate(0.7, 0.0), 0.0);
        assert_eq!(gate(0.7, 1.0), 0.7);
        assert!((gate(-0.5, 0.3) + 0.15).abs() < 1e-15);
        assert_eq!(apply_thresholds(0.0, -0.1, 0.1).unwrap(), NEUTRAL);
        assert_eq!(apply_thresholds(-0.5, -0.1, 0.1).unwrap(), NEGATIVE);
        assert_eq!(apply_thresholds(0.1, -0.1, 0.1).unwrap(), NEUTRAL);
        assert_eq!(apply_thresholds(-0.1, -0.1, 0.1).unwrap(), NEUTRAL);
        assert_eq!(apply_thresholds(0.2, -0.1, 0.1).unwrap(), POSITIVE);
        assert!(apply_thresholds(0.0, 0.2, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn weights_are_antisymmetric_and_evenly_spaced(c in 2usize..40) {
            let w = PolarityMap::new(c).unwrap().weights().to_vec();
            prop_assert_eq!(w[0], -1.0);
            prop_assert_eq!(w[c - 1], 1.0);
            let step = 2.0 / (c - 1) as f64;
            for i in 0..c {
                prop_assert!((w[i] + w[c - 1 - i]).abs() < 1e-12);
                if i > 0 {
                    prop_assert!((w[i] - w[i - 1] - step).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn gate_never_grows_magnitude(g in -1.0f64..1.0, a in 0.0f64..=1.0) {
            prop_assert!(gate(g, a).abs() <= g.abs());
        }
    }
}
