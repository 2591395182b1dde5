//! Dense feed-forward networks with hand-written backpropagation and an
//! Adam optimizer, generic over the scalar type.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    fn grad_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Tanh => T::one() - y * y,
            Activation::Identity => T::one(),
        }
    }
}

/// `y = act(x W^T + b)`, with `W` stored as `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    fn forward(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut z = x.dot(&self.weight.t());
        z += &self.bias;
        let act = self.activation;
        z.mapv_inplace(|v| act.apply(v));
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
}

/// Activations recorded by [`Mlp::forward_tape`]: `acts[0]` is the input,
/// `acts[i + 1]` the output of layer `i`.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    pub acts: Vec<Array2<T>>,
}

impl<T> Tape<T> {
    pub fn output(&self) -> &Array2<T> {
        self.acts.last().expect("tape holds at least the input")
    }
}

/// Parameter gradients, one `(dW, db)` pair per layer.
#[derive(Debug, Clone)]
pub struct Grads<T> {
    pub layers: Vec<(Array2<T>, Array1<T>)>,
}

impl<T: Scalar> Grads<T> {
    pub fn zeros_like(net: &Mlp<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| {
                    (
                        Array2::zeros(l.weight.raw_dim()),
                        Array1::zeros(l.bias.raw_dim()),
                    )
                })
                .collect(),
        }
    }

    pub fn get(&self, index: usize) -> T {
        let mut i = index;
        for (w, b) in &self.layers {
            if i < w.len() {
                return w[[i / w.ncols(), i % w.ncols()]];
            }
            i -= w.len();
            if i < b.len() {
                return b[i];
            }
            i -= b.len();
        }
        panic!("gradient index {index} out of range")
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().chain(b.iter()).all(|v| v.is_finite()))
    }
}

impl<T: Scalar> Mlp<T> {
    /// Layer widths `sizes[0] -> sizes[1] -> ...`; hidden layers use
    /// `hidden`, the last layer `output`. Weights and biases are drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output width");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut draw = || T::lit(rng.random_range(-bound..bound));
                Dense {
                    weight: Array2::from_shape_simple_fn((fan_out, fan_in), &mut draw),
                    bias: Array1::from_shape_simple_fn(fan_out, &mut draw),
                    activation: if i + 1 == n { output } else { hidden },
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Self {
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| Dense {
                weight: Array2::zeros((sizes[i + 1], sizes[i])),
                bias: Array1::zeros(sizes[i + 1]),
                activation: if i + 1 == n { output } else { hidden },
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::out_dim)
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut h = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            h = layer.forward(h.view());
        }
        h
    }

    pub fn forward_tape(&self, x: ArrayView2<T>) -> Tape<T> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for layer in &self.layers {
            let next = layer.forward(acts.last().unwrap().view());
            acts.push(next);
        }
        Tape { acts }
    }

    /// Backpropagate `grad_out = dL/d(output)` through a recorded pass.
    pub fn backward(&self, tape: &Tape<T>, grad_out: Array2<T>) -> Grads<T> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_out;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let y = &tape.acts[i + 1];
            let act = layer.activation;
            let mut dz = upstream;
            ndarray::Zip::from(&mut dz)
                .and(y)
                .for_each(|d, &yv| *d *= act.grad_from_output(yv));
            let dw = dz.t().dot(&tape.acts[i]);
            let db = dz.sum_axis(Axis(0));
            if i > 0 {
                upstream = dz.dot(&layer.weight);
            } else {
                upstream = Array2::zeros((0, 0));
            }
            grads.push((dw, db));
        }
        grads.reverse();
        Grads { layers: grads }
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    fn param_mut(&mut self, index: usize) -> &mut T {
        let mut i = index;
        for layer in &mut self.layers {
            let cols = layer.weight.ncols();
            if i < layer.weight.len() {
                return &mut layer.weight[[i / cols, i % cols]];
            }
            i -= layer.weight.len();
            if i < layer.bias.len() {
                return &mut layer.bias[i];
            }
            i -= layer.bias.len();
        }
        panic!("parameter index {index} out of range")
    }

    /// Flat parameter access: layer by layer, weights row-major then bias.
    pub fn param(&self, index: usize) -> T {
        let mut i = index;
        for layer in &self.layers {
            if i < layer.weight.len() {
                return layer.weight[[i / layer.weight.ncols(), i % layer.weight.ncols()]];
            }
            i -= layer.weight.len();
            if i < layer.bias.len() {
                return layer.bias[i];
            }
            i -= layer.bias.len();
        }
        panic!("parameter index {index} out of range")
    }

    pub fn set_param(&mut self, index: usize, value: T) {
        *self.param_mut(index) = value;
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Polyak averaging: `self <- (1 - rho) self + rho src`.
    pub fn soft_update(&mut self, src: &Mlp<T>, rho: T) {
        let keep = T::one() - rho;
        for (dst, s) in self.layers.iter_mut().zip(&src.layers) {
            dst.weight
                .zip_mut_with(&s.weight, |d, &v| *d = keep * *d + rho * v);
            dst.bias
                .zip_mut_with(&s.bias, |d, &v| *d = keep * *d + rho * v);
        }
    }

    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: l.weight.mapv(|v| U::lit(v.as_f64())),
                    bias: l.bias.mapv(|v| U::lit(v.as_f64())),
                    activation: l.activation,
                })
                .collect(),
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    t: i32,
    m: Grads<T>,
    v: Grads<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(net: &Mlp<T>, lr: T) -> Self {
        Self {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            t: 0,
            m: Grads::zeros_like(net),
            v: Grads::zeros_like(net),
        }
    }

    pub fn step(&mut self, net: &mut Mlp<T>, grads: &Grads<T>) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        let (lr, eps) = (self.lr, self.eps);
        let update = |p: &mut T, m: &mut T, v: &mut T, g: T| {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((layer, (gw, gb)), (mw, mb)), (vw, vb)) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.m.layers.iter_mut())
            .zip(self.v.layers.iter_mut())
        {
            ndarray::Zip::from(&mut layer.weight)
                .and(mw)
                .and(vw)
                .and(gw)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            ndarray::Zip::from(&mut layer.bias)
                .and(mb)
                .and(vb)
                .and(gb)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
    }
}
