use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::tape::{Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Swish,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Swish => tape.swish(x),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "linear" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "swish" => Ok(Activation::Swish),
            other => Err(Error::invalid(format!("unknown activation {other}"))),
        }
    }
}

/// Fully connected layer `act(x W + b)`; an optional 0/1 mask is multiplied
/// into `W` on every pass.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Mat,
    pub bias: Mat,
    pub activation: Activation,
    pub mask: Option<Mat>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Anything with trainable matrices in a fixed order.
pub trait Model: Clone {
    fn parameters(&self) -> Vec<&Mat>;
    fn parameters_mut(&mut self) -> Vec<&mut Mat>;

    fn n_params(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    fn flat_params(&self) -> Vec<f64> {
        self.parameters().iter().flat_map(|p| p.iter().copied()).collect()
    }

    fn set_flat_params(&mut self, values: &[f64]) {
        let mut it = values.iter();
        for p in self.parameters_mut() {
            for v in p.iter_mut() {
                *v = *it.next().expect("too few parameter values");
            }
        }
        assert!(it.next().is_none(), "too many parameter values");
    }

    fn params_finite(&self) -> bool {
        self.parameters().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}

impl Mlp {
    /// Layers of the given widths; hidden layers use `hidden`, the last one
    /// `output`. Weights are Glorot-uniform, biases zero.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, seed: u64) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let mut r = rng::seeded(seed);
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Dense {
                    weight: Array2::from_shape_fn((fan_in, fan_out), |_| rng::uniform(&mut r, -limit, limit)),
                    bias: Array2::zeros((1, fan_out)),
                    activation: if l + 1 == n { output } else { hidden },
                    mask: None,
                }
            })
            .collect();
        Mlp { layers }
    }

    /// `n_layers` dense layers mapping `input` through `hidden`-wide layers to
    /// `output`.
    pub fn with_depth(
        input: usize,
        hidden: usize,
        output: usize,
        n_layers: usize,
        activation: Activation,
        seed: u64,
    ) -> Self {
        let mut sizes = vec![input];
        sizes.extend(std::iter::repeat_n(hidden, n_layers.max(1) - 1));
        sizes.push(output);
        Mlp::new(&sizes, activation, Activation::Identity, seed)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.ncols()
    }

    pub fn n_tensors(&self) -> usize {
        2 * self.layers.len()
    }

    /// Zeroes the last layer so the network outputs zero everywhere.
    pub fn zero_last_layer(&mut self) {
        let last = self.layers.last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias.fill(0.0);
    }

    /// Forward pass on the tape; `params` are this network's tensors in
    /// [`Model::parameters`] order.
    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: Var) -> Var {
        assert_eq!(params.len(), self.n_tensors(), "parameter count mismatch");
        let mut h = x;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut w = params[2 * l];
            if let Some(mask) = &layer.mask {
                let m = tape.constant(mask.clone());
                w = tape.mul(w, m);
            }
            let z = tape.matmul(h, w);
            let z = tape.add(z, params[2 * l + 1]);
            h = layer.activation.apply(tape, z);
        }
        h
    }

    /// Forward pass without recording gradients.
    pub fn eval(&self, x: &Mat) -> Mat {
        let mut tape = Tape::new();
        let params = tape.bind_constants(self.parameters());
        let xv = tape.constant(x.clone());
        let out = self.forward(&mut tape, &params, xv);
        tape.value(out).clone()
    }
}

impl Model for Mlp {
    fn parameters(&self) -> Vec<&Mat> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Mat> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}
