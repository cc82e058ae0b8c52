//! Dense feed-forward network with hand-written reverse mode.
//!
//! Parameters live in one flat vector, layer by layer: the weight matrix
//! (row-major, `n_out × n_in`) followed by the bias.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softplus,
    Elu,
    Tanh,
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Softplus => softplus(x),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(x),
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "softplus" => Ok(Activation::Softplus),
            "elu" => Ok(Activation::Elu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub params: Vec<f64>,
}

/// Intermediate values of one forward pass, reusable across calls.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
    delta: Vec<f64>,
    scratch: Vec<f64>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(sizes: &[usize], activation: Activation, rng: &mut Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            for _ in 0..n_in * n_out {
                params.push(rng.random_range(-limit..limit));
            }
            params.extend(std::iter::repeat_n(0.0, n_out));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            activation,
            params,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_in(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_out(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        let expected: usize = self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if self.sizes.len() < 2 || self.params.len() != expected {
            return Err(Error::Config(format!(
                "network has {} parameters, layer sizes {:?} need {expected}",
                self.params.len(),
                self.sizes
            )));
        }
        if self.params.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numerical("non-finite network weight".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut tape = Tape::default();
        self.forward_tape(x, &mut tape);
        tape.output
    }

    /// Forward pass recording what the backward pass needs.
    pub fn forward_tape(&self, x: &[f64], tape: &mut Tape) {
        let n_layers = self.sizes.len() - 1;
        tape.inputs.resize_with(n_layers, Vec::new);
        tape.pre.resize_with(n_layers.saturating_sub(1), Vec::new);
        tape.inputs[0].clear();
        tape.inputs[0].extend_from_slice(x);
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let input = &tape.inputs[l];
            let z: Vec<f64> = (0..n_out)
                .map(|i| {
                    let row = &w[i * n_in..(i + 1) * n_in];
                    b[i] + row.iter().zip(input).map(|(a, c)| a * c).sum::<f64>()
                })
                .collect();
            if l + 1 < n_layers {
                let next: Vec<f64> = z.iter().map(|v| self.activation.apply(*v)).collect();
                tape.pre[l] = z;
                tape.inputs[l + 1] = next;
            } else {
                tape.output = z;
            }
        }
    }

    /// Accumulates `∂loss/∂params` into `grad` given `∂loss/∂output`.
    pub fn backward(&self, tape: &mut Tape, d_out: &[f64], grad: &mut [f64]) {
        let n_layers = self.sizes.len() - 1;
        let mut ends = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offset += w[0] * w[1] + w[1];
            ends.push(offset);
        }
        tape.delta.clear();
        tape.delta.extend_from_slice(d_out);
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let start = ends[l] - n_in * n_out - n_out;
            let input = &tape.inputs[l];
            for i in 0..n_out {
                let d = tape.delta[i];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[start + i * n_in..start + (i + 1) * n_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
                grad[start + n_in * n_out + i] += d;
            }
            if l > 0 {
                let w = &self.params[start..start + n_in * n_out];
                tape.scratch.clear();
                tape.scratch.resize(n_in, 0.0);
                for i in 0..n_out {
                    let d = tape.delta[i];
                    if d == 0.0 {
                        continue;
                    }
                    for (s, wv) in tape.scratch.iter_mut().zip(&w[i * n_in..(i + 1) * n_in]) {
                        *s += d * wv;
                    }
                }
                for (s, z) in tape.scratch.iter_mut().zip(&tape.pre[l - 1]) {
                    *s *= self.activation.derivative(*z);
                }
                std::mem::swap(&mut tape.delta, &mut tape.scratch);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn parameter_count_and_shapes() {
        let net = Mlp::new(&[3, 25, 25, 2], Activation::Relu, &mut rng_from_seed(1)).unwrap();
        assert_eq!(net.n_params(), 3 * 25 + 25 + 25 * 25 + 25 + 25 * 2 + 2);
        assert_eq!(net.forward(&[0.1, 0.2, 0.3]).len(), 2);
        net.validate().unwrap();
        assert!(Mlp::new(&[3], Activation::Relu, &mut rng_from_seed(1)).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        for act in [Activation::Softplus, Activation::Elu, Activation::Tanh] {
            let mut net = Mlp::new(&[3, 7, 5, 2], act, &mut rng_from_seed(3)).unwrap();
            let x = [0.3, -0.8, 1.1];
            // loss = c · output
            let c = [0.7, -1.3];
            let mut tape = Tape::default();
            net.forward_tape(&x, &mut tape);
            let mut grad = vec![0.0; net.n_params()];
            net.backward(&mut tape, &c, &mut grad);
            let step = 1e-5;
            for k in 0..net.n_params() {
                let w0 = net.params[k];
                net.params[k] = w0 + step;
                let up: f64 = net.forward(&x).iter().zip(&c).map(|(a, b)| a * b).sum();
                net.params[k] = w0 - step;
                let dn: f64 = net.forward(&x).iter().zip(&c).map(|(a, b)| a * b).sum();
                net.params[k] = w0;
                let fd = (up - dn) / (2.0 * step);
                assert!((fd - grad[k]).abs() <= 1e-6 * (1.0 + fd.abs()), "{act:?} param {k}: {fd} vs {}", grad[k]);
            }
        }
    }

    #[test]
    fn activations_are_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(Activation::parse("ELU").unwrap(), Activation::Elu);
        assert!(Activation::parse("gelu").is_err());
    }
}
