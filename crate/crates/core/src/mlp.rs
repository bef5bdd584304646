//! Multi-layer perceptrons: affine layers with a rectifier between them and
//! no activation after the last one.

use rand::Rng;

use crate::bind::Binder;
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    /// `[out × in]`
    pub weight: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    layers: Vec<DenseLayer<T>>,
}

/// Uniform in `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Scalar, R: Rng + ?Sized>(rng: &mut R, out: usize, inp: usize) -> Tensor<T> {
    let a = (6.0 / (inp + out).max(1) as f64).sqrt();
    let data = (0..out * inp)
        .map(|_| T::from_f64_lossy(rng.gen_range(-a..=a)))
        .collect();
    Tensor::matrix(out, inp, data).expect("shape matches data")
}

impl<T: Scalar> MlpParams<T> {
    pub fn new(layers: Vec<DenseLayer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("mlp layers"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weight.rank() != 2 || l.bias.rank() != 1 || l.bias.len() != l.weight.shape()[0] {
                return Err(invalid(format!(
                    "mlp layer {i}: weight {:?} and bias {:?} disagree",
                    l.weight.shape(),
                    l.bias.shape()
                )));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].weight.shape()[0] != pair[1].weight.shape()[1] {
                return Err(invalid(format!(
                    "mlp layers {i} and {} do not chain: {:?} then {:?}",
                    i + 1,
                    pair[0].weight.shape(),
                    pair[1].weight.shape()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Random weights for the width sequence `dims = [in, hidden.., out]`, zero biases.
    pub fn glorot<R: Rng + ?Sized>(rng: &mut R, dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 {
            return Err(invalid("an mlp needs at least input and output widths"));
        }
        let layers = dims
            .windows(2)
            .map(|w| DenseLayer {
                weight: glorot_uniform(rng, w[1], w[0]),
                bias: Tensor::zeros(&[w[1]]),
            })
            .collect();
        Self::new(layers)
    }

    pub fn identity(d: usize) -> Self {
        Self {
            layers: vec![DenseLayer {
                weight: Tensor::identity(d),
                bias: Tensor::zeros(&[d]),
            }],
        }
    }

    /// Zero weights and bias `value`: ignores its input.
    pub fn constant(inp: usize, out: usize, value: T) -> Self {
        Self {
            layers: vec![DenseLayer {
                weight: Tensor::zeros(&[out, inp]),
                bias: Tensor::full(&[out], value),
            }],
        }
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.shape()[0]
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        for (i, l) in self.layers.iter().enumerate() {
            f(format!("{prefix}.{i}.W"), &l.weight);
            f(format!("{prefix}.{i}.b"), &l.bias);
        }
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            f(format!("{prefix}.{i}.W"), &mut l.weight);
            f(format!("{prefix}.{i}.b"), &mut l.bias);
        }
    }

    pub fn bind(&self, binder: &mut Binder<'_, T>, prefix: &str) -> MlpVars {
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                (
                    binder.bind(format!("{prefix}.{i}.W"), &l.weight),
                    binder.bind(format!("{prefix}.{i}.b"), &l.bias),
                )
            })
            .collect();
        MlpVars { layers }
    }
}

/// Evaluates the MLP on a vector or on every row of a matrix.
pub fn mlp_forward<T: Scalar>(p: &MlpParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.cols() != p.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "mlp_forward",
            left: x.shape().to_vec(),
            right: vec![p.input_dim()],
        });
    }
    let mut h = x.clone();
    let last = p.layers.len() - 1;
    for (i, l) in p.layers.iter().enumerate() {
        h = Tensor::linear(&h, &l.weight, &l.bias)?;
        if i < last {
            h = h.relu();
        }
    }
    Ok(h)
}

/// Tape handles for an [`MlpParams`].
#[derive(Debug, Clone)]
pub struct MlpVars {
    layers: Vec<(Var, Var)>,
}

impl MlpVars {
    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            h = tape.linear(h, w, b)?;
            if i < last {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}
