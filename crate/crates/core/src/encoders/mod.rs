//! Small trainable dual encoders over precomputed features.
//!
//! `linear`: `X W + b`. `mlp1`: `relu(X W1 + b1) W2 + b2`. Weights are stored
//! input-major (`in x out`) so a batch is a plain matrix product.

mod adam;
mod checkpoint;

pub use adam::{optimizer_step, AdamConfig, AdamPreset, OptimizerState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, RngState};

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    #[default]
    Linear,
    Mlp1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub kind: EncoderKind,
    pub input_dim: usize,
    /// Zero for `linear`.
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub layers: Vec<Dense>,
}

/// Parameter gradients, shaped like the encoder's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub layers: Vec<Dense>,
}

impl EncoderParams {
    /// Uniform initialization in +-1/sqrt(fan_in).
    pub fn init<R: Rng>(
        kind: EncoderKind,
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || (kind == EncoderKind::Mlp1 && hidden_dim == 0) {
            return Err(Error::Shape("encoder dimensions must be positive".into()));
        }
        let mut layer = |fan_in: usize, fan_out: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weight =
                Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..bound));
            let bias = Array1::from_shape_simple_fn(fan_out, || rng.random_range(-bound..bound));
            Dense { weight, bias }
        };
        let (hidden_dim, layers) = match kind {
            EncoderKind::Linear => (0, vec![layer(input_dim, output_dim)]),
            EncoderKind::Mlp1 => (
                hidden_dim,
                vec![layer(input_dim, hidden_dim), layer(hidden_dim, output_dim)],
            ),
        };
        Ok(Self {
            kind,
            input_dim,
            hidden_dim,
            output_dim,
            layers,
        })
    }

    /// Checks layer shapes against the declared dimensions.
    pub fn validate(&self) -> Result<()> {
        let dims: Vec<(usize, usize)> = match self.kind {
            EncoderKind::Linear => vec![(self.input_dim, self.output_dim)],
            EncoderKind::Mlp1 => vec![
                (self.input_dim, self.hidden_dim),
                (self.hidden_dim, self.output_dim),
            ],
        };
        if dims.len() != self.layers.len()
            || dims
                .iter()
                .zip(&self.layers)
                .any(|(&d, l)| l.weight.dim() != d || l.bias.len() != d.1)
        {
            return Err(Error::Shape("encoder layers do not match declared dimensions".into()));
        }
        if self
            .layers
            .iter()
            .any(|l| l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()))
        {
            return Err(Error::Shape("encoder holds non-finite parameters".into()));
        }
        Ok(())
    }

    fn check_input(&self, inputs: &Array2<f64>) -> Result<()> {
        if inputs.ncols() != self.input_dim {
            return Err(Error::Shape(format!(
                "input width {} but encoder expects {}",
                inputs.ncols(),
                self.input_dim
            )));
        }
        Ok(())
    }

    pub fn forward(&self, inputs: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(inputs)?;
        Ok(match self.kind {
            EncoderKind::Linear => self.layers[0].apply(inputs),
            EncoderKind::Mlp1 => {
                let h = self.layers[0].apply(inputs).mapv(|v| v.max(0.0));
                self.layers[1].apply(&h)
            }
        })
    }

    /// Parameter and input gradients given the gradient at the output.
    pub fn backward(
        &self,
        inputs: &Array2<f64>,
        grad_output: &Array2<f64>,
    ) -> Result<(EncoderGrads, Array2<f64>)> {
        self.check_input(inputs)?;
        if grad_output.dim() != (inputs.nrows(), self.output_dim) {
            return Err(Error::Shape(format!(
                "grad_output {:?} does not match ({}, {})",
                grad_output.dim(),
                inputs.nrows(),
                self.output_dim
            )));
        }
        let dense_backward = |layer: &Dense, x: &Array2<f64>, g: &Array2<f64>| {
            (
                Dense {
                    weight: x.t().dot(g),
                    bias: g.sum_axis(Axis(0)),
                },
                g.dot(&layer.weight.t()),
            )
        };
        match self.kind {
            EncoderKind::Linear => {
                let (d, gx) = dense_backward(&self.layers[0], inputs, grad_output);
                Ok((EncoderGrads { layers: vec![d] }, gx))
            }
            EncoderKind::Mlp1 => {
                let pre = self.layers[0].apply(inputs);
                let h = pre.mapv(|v| v.max(0.0));
                let (d2, gh) = dense_backward(&self.layers[1], &h, grad_output);
                let mut gpre = gh;
                gpre.zip_mut_with(&pre, |g, &p| {
                    if p <= 0.0 {
                        *g = 0.0
                    }
                });
                let (d1, gx) = dense_backward(&self.layers[0], inputs, &gpre);
                Ok((EncoderGrads { layers: vec![d1, d2] }, gx))
            }
        }
    }

    pub fn zero_grads(&self) -> EncoderGrads {
        EncoderGrads {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.weight.nrows(), l.weight.ncols()))
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }
}

fn blocks(layers: &[Dense]) -> Vec<&[f64]> {
    layers
        .iter()
        .flat_map(|l| {
            [
                l.weight.as_slice().expect("standard layout"),
                l.bias.as_slice().expect("standard layout"),
            ]
        })
        .collect()
}

fn blocks_mut(layers: &mut [Dense]) -> Vec<&mut [f64]> {
    layers
        .iter_mut()
        .flat_map(|l| {
            [
                l.weight.as_slice_mut().expect("standard layout"),
                l.bias.as_slice_mut().expect("standard layout"),
            ]
        })
        .collect()
}

impl EncoderGrads {
    pub fn accumulate(&mut self, other: &EncoderGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }
}

/// Image and text encoders trained together.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEncoder {
    pub image: EncoderParams,
    pub text: EncoderParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualGrads {
    pub image: EncoderGrads,
    pub text: EncoderGrads,
}

impl DualEncoder {
    pub fn init<R: Rng>(
        kind: EncoderKind,
        image_dim: usize,
        text_dim: usize,
        hidden_dim: usize,
        embed_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let image = EncoderParams::init(kind, image_dim, hidden_dim, embed_dim, rng)?;
        let text = EncoderParams::init(kind, text_dim, hidden_dim, embed_dim, rng)?;
        Ok(Self { image, text })
    }

    pub fn zero_grads(&self) -> DualGrads {
        DualGrads {
            image: self.image.zero_grads(),
            text: self.text.zero_grads(),
        }
    }

    /// Flat parameter blocks, image encoder first.
    pub fn param_blocks(&self) -> Vec<&[f64]> {
        let mut b = blocks(&self.image.layers);
        b.extend(blocks(&self.text.layers));
        b
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut b = blocks_mut(&mut self.image.layers);
        b.extend(blocks_mut(&mut self.text.layers));
        b
    }
}

impl DualGrads {
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut b = blocks(&self.image.layers);
        b.extend(blocks(&self.text.layers));
        b
    }
}
