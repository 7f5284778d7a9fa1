use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
    Sin,
}

impl Activation {
    pub fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Sin => z.sin(),
        }
    }

    /// Derivative given the pre-activation `z` and output `a`. ReLU uses the
    /// right derivative at zero.
    pub fn derivative<T: Real>(self, z: T, a: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if z >= T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - a * a,
            Activation::Sigmoid => a * (T::one() - a),
            Activation::Sin => z.cos(),
        }
    }

    pub fn is_smooth(self) -> bool {
        !matches!(self, Activation::Relu)
    }
}

pub fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Fully connected layer; `weights[o][i]` maps input `i` to output `o`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DenseLayer<T> {
    pub weights: Vec<Vec<T>>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Real> DenseLayer<T> {
    pub fn in_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn out_dim(&self) -> usize {
        self.weights.len()
    }

    pub(crate) fn forward_into(&self, input: &[T], pre: &mut [T], out: &mut [T]) {
        for (o, (row, b)) in self.weights.iter().zip(&self.bias).enumerate() {
            let z = row.iter().zip(input).fold(*b, |acc, (w, x)| acc + *w * *x);
            pre[o] = z;
            out[o] = self.activation.apply(z);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DenseNetwork<T> {
    pub layers: Vec<DenseLayer<T>>,
}

impl<T: Real> DenseNetwork<T> {
    pub fn new(layers: Vec<DenseLayer<T>>) -> Self {
        Self { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, DenseLayer::in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::out_dim)
    }

    /// Sum of all layer widths; the size of the pre-activation tape.
    pub(crate) fn tape_len(&self) -> usize {
        self.layers.iter().map(DenseLayer::out_dim).sum()
    }

    pub fn eval(&self, input: &[T]) -> Vec<T> {
        let n = self.tape_len();
        let mut pre = vec![T::zero(); n];
        let mut act = vec![T::zero(); n];
        self.forward(input, &mut pre, &mut act);
        act[n - self.out_dim()..].to_vec()
    }

    /// Runs every layer, storing pre-activations and activations layer by
    /// layer into the flat tapes.
    pub(crate) fn forward(&self, input: &[T], pre: &mut [T], act: &mut [T]) {
        let mut offset = 0;
        for (l, layer) in self.layers.iter().enumerate() {
            let width = layer.out_dim();
            let (done, rest) = act.split_at_mut(offset);
            let x: &[T] = if l == 0 {
                input
            } else {
                let prev = self.layers[l - 1].out_dim();
                &done[offset - prev..]
            };
            layer.forward_into(x, &mut pre[offset..offset + width], &mut rest[..width]);
            offset += width;
        }
    }

    /// Reverse sweep: given the output adjoint, accumulates the input adjoint
    /// into `adj_in`. `scratch` must hold at least `2 * max width` entries.
    pub(crate) fn backward(
        &self,
        pre: &[T],
        act: &[T],
        adj_out: &[T],
        adj_in: &mut [T],
        scratch: &mut Vec<T>,
    ) {
        let max_w = self
            .layers
            .iter()
            .map(|l| l.out_dim().max(l.in_dim()))
            .max()
            .unwrap_or(0);
        scratch.clear();
        scratch.resize(2 * max_w, T::zero());
        let (cur, next) = scratch.split_at_mut(max_w);
        let mut end = pre.len();
        cur[..adj_out.len()].copy_from_slice(adj_out);
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let width = layer.out_dim();
            let start = end - width;
            for o in 0..width {
                cur[o] = cur[o] * layer.activation.derivative(pre[start + o], act[start + o]);
            }
            let in_w = layer.in_dim();
            for v in next[..in_w].iter_mut() {
                *v = T::zero();
            }
            for (o, row) in layer.weights.iter().enumerate() {
                let g = cur[o];
                for (i, w) in row.iter().enumerate() {
                    next[i] = next[i] + *w * g;
                }
            }
            if l == 0 {
                for i in 0..in_w {
                    adj_in[i] = adj_in[i] + next[i];
                }
            } else {
                cur[..in_w].copy_from_slice(&next[..in_w]);
            }
            end = start;
        }
    }
}
