use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::{glorot, uniform};
use crate::diffcore::{ParamId, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    #[default]
    Relu,
    Tanh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnConfig {
    pub kernel_widths: Vec<usize>,
    pub feature_maps: usize,
    pub nonlinearity: Nonlinearity,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            kernel_widths: vec![3, 4, 5],
            feature_maps: 100,
            nonlinearity: Nonlinearity::Relu,
        }
    }
}

impl CnnConfig {
    pub fn output_dim(&self) -> usize {
        self.kernel_widths.len() * self.feature_maps
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_widths.is_empty() || self.kernel_widths.contains(&0) || self.feature_maps == 0 {
            return Err(Error::Config(format!("bad CNN shape {self:?}")));
        }
        Ok(())
    }
}

/// Multi-width convolution with max-over-time pooling.
#[derive(Clone, Debug)]
pub struct CnnEncoder {
    config: CnnConfig,
    kernels: Vec<ParamId>,
    biases: Vec<ParamId>,
}

impl CnnEncoder {
    /// Registers `{prefix}.kernel{w}` (`[w, input_dim, maps]`) and
    /// `{prefix}.bias{w}` for every width.
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        prefix: &str,
        input_dim: usize,
        config: CnnConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let f = config.feature_maps;
        let mut kernels = Vec::new();
        let mut biases = Vec::new();
        for &w in &config.kernel_widths {
            let k = glorot(rng, &[w, input_dim, f], w * input_dim, f);
            kernels.push(params.add(format!("{prefix}.kernel{w}"), k, true)?);
            let b = uniform(rng, &[f], 0.0);
            biases.push(params.add(format!("{prefix}.bias{w}"), b, true)?);
        }
        Ok(CnnEncoder {
            config,
            kernels,
            biases,
        })
    }

    /// Re-binds an encoder to parameters loaded from a checkpoint.
    pub fn bind(params: &ParamSet, prefix: &str, config: CnnConfig) -> Result<Self> {
        config.validate()?;
        let mut kernels = Vec::new();
        let mut biases = Vec::new();
        for &w in &config.kernel_widths {
            kernels.push(params.id(&format!("{prefix}.kernel{w}"))?);
            biases.push(params.id(&format!("{prefix}.bias{w}"))?);
        }
        Ok(CnnEncoder {
            config,
            kernels,
            biases,
        })
    }

    pub fn config(&self) -> &CnnConfig {
        &self.config
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    fn widest(&self) -> usize {
        self.config.kernel_widths.iter().copied().max().unwrap_or(1)
    }

    /// Encodes embedded tokens `x` (`[len, input_dim]`) into a vector of
    /// `output_dim`. Inputs shorter than the widest kernel are zero-padded
    /// on both sides (extra row on the right when the gap is odd).
    pub fn encode(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let len = tape.value(x).rows();
        let gap = self.widest().saturating_sub(len);
        let x = tape.pad_rows(x, gap / 2, gap - gap / 2)?;
        let mut pooled = Vec::with_capacity(self.kernels.len());
        for (&k, &b) in self.kernels.iter().zip(&self.biases) {
            let kv = tape.param(k);
            let bv = tape.param(b);
            let c = tape.conv1d(x, kv, bv)?;
            let a = match self.config.nonlinearity {
                Nonlinearity::Relu => tape.relu(c)?,
                Nonlinearity::Tanh => tape.tanh(c)?,
            };
            pooled.push(tape.max_over_time(a)?);
        }
        tape.concat(&pooled)
    }

    /// Convenience wrapper for a constant input matrix.
    pub fn encode_matrix(&self, tape: &mut Tape, x: Tensor) -> Result<Var> {
        let x = tape.constant(x);
        self.encode(tape, x)
    }
}
