use serde::{Deserialize, Serialize};

use crate::error::{check_dim, domain, Result};
use crate::linalg::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out × in`, serialized as row-major nested arrays.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weights.matvec(x);
        for (yi, b) in y.iter_mut().zip(&self.bias) {
            *yi += b;
        }
        y
    }
}

/// Fully connected network: tanh on hidden layers, affine output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRepr", into = "MlpRepr")]
pub struct Mlp {
    activation: Activation,
    layers: Vec<Dense>,
}

#[derive(Serialize, Deserialize)]
struct MlpRepr {
    #[serde(default)]
    activation: Activation,
    layers: Vec<Dense>,
}

impl TryFrom<MlpRepr> for Mlp {
    type Error = crate::Error;
    fn try_from(r: MlpRepr) -> Result<Self> {
        Mlp::new(r.layers)
    }
}

impl From<Mlp> for MlpRepr {
    fn from(m: Mlp) -> Self {
        MlpRepr {
            activation: m.activation,
            layers: m.layers,
        }
    }
}

/// Parameter gradients with the same layout as the network.
#[derive(Debug, Clone)]
pub struct MlpGradient {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(domain("an MLP needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weights.rows() {
                return Err(domain(format!("layer {i}: bias length does not match rows")));
            }
            if i > 0 && layers[i - 1].weights.rows() != l.weights.cols() {
                return Err(domain(format!("layer {i}: input width mismatch")));
            }
            let finite = l.weights.as_slice().iter().chain(&l.bias).all(|v| v.is_finite());
            if !finite {
                return Err(domain(format!("layer {i}: non-finite weights")));
            }
        }
        Ok(Mlp {
            activation: Activation::Tanh,
            layers,
        })
    }

    /// Gaussian initialization with standard deviation `gain/√fan_in`.
    pub fn random(widths: &[usize], gain: f64, seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(domain("MLP widths need at least input and output, all positive"));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let mut r = rng::substream(seed, i as u64);
                let std = gain / (fan_in as f64).sqrt();
                let data = rng::standard_normal_vec(&mut r, fan_in * fan_out)
                    .into_iter()
                    .map(|v| v * std)
                    .collect();
                let bias = rng::standard_normal_vec(&mut r, fan_out)
                    .into_iter()
                    .map(|v| 0.1 * v)
                    .collect();
                Dense {
                    weights: Matrix::from_row_major(fan_out, fan_in, data),
                    bias,
                }
            })
            .collect();
        Mlp::new(layers)
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weights.rows()
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.weights.rows()))
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(&h);
            if i < last {
                h.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
        h
    }

    /// Inputs to every layer plus the final output.
    fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let last = self.layers.len() - 1;
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut h = layer.apply(trace.last().unwrap());
            if i < last {
                h.iter_mut().for_each(|v| *v = v.tanh());
            }
            trace.push(h);
        }
        trace
    }

    /// Jacobian of the output with respect to the input (`out × in`).
    pub(crate) fn jacobian_unchecked(&self, x: &[f64]) -> Matrix {
        let trace = self.forward_trace(x);
        let last = self.layers.len() - 1;
        let mut jac = self.layers[0].weights.clone();
        for i in 0..last {
            let deriv: Vec<f64> = trace[i + 1].iter().map(|a| 1.0 - a * a).collect();
            jac.scale_rows(&deriv);
            jac = self.layers[i + 1].weights.matmul(&jac);
        }
        jac
    }

    /// Forward-mode product `J(x)·v`.
    pub(crate) fn jvp_unchecked(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        let mut t = v.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(&h);
            t = layer.weights.matvec(&t);
            if i < last {
                for (hi, ti) in h.iter_mut().zip(t.iter_mut()) {
                    *hi = hi.tanh();
                    *ti *= 1.0 - *hi * *hi;
                }
            }
        }
        t
    }

    /// Backpropagates `grad_out` (gradient of a scalar loss with respect to
    /// the output) to parameter gradients and the input gradient.
    pub(crate) fn backward(&self, x: &[f64], grad_out: &[f64]) -> (MlpGradient, Vec<f64>) {
        let trace = self.forward_trace(x);
        let mut delta = grad_out.to_vec();
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let input = &trace[i];
            let layer = &self.layers[i];
            let mut gw = Matrix::zeros(layer.weights.rows(), layer.weights.cols());
            for (r, d) in delta.iter().enumerate() {
                for (c, inp) in input.iter().enumerate() {
                    gw[(r, c)] = d * inp;
                }
            }
            grads.push(Dense {
                weights: gw,
                bias: delta.clone(),
            });
            let mut back = layer.weights.matvec_t(&delta);
            if i > 0 {
                for (b, a) in back.iter_mut().zip(input) {
                    *b *= 1.0 - a * a;
                }
            }
            delta = back;
        }
        grads.reverse();
        (MlpGradient { layers: grads }, delta)
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }
}

impl MlpGradient {
    pub(crate) fn zeros_like(net: &Mlp) -> Self {
        MlpGradient {
            layers: net
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub(crate) fn add_scaled(&mut self, other: &MlpGradient, s: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.as_mut_slice().iter_mut().zip(b.weights.as_slice()) {
                *x += s * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += s * y;
            }
        }
    }
}
