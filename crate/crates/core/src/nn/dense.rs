use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
        }
    }

    /// Applies the activation to a (batch, width) pre-activation.
    pub fn apply<T: Real>(self, pre: &Tensor<T>) -> Tensor<T> {
        match self {
            Activation::Linear => pre.clone(),
            Activation::Relu => pre.map(|v| v.max(T::zero())),
            Activation::Tanh => pre.map(|v| v.tanh()),
            Activation::Sigmoid => pre.map(sigmoid),
            Activation::Softmax => {
                let mut out = pre.clone();
                for i in 0..out.rows() {
                    softmax_in_place(out.row_mut(i));
                }
                out
            }
        }
    }

    /// Maps dL/d(activated) to dL/d(pre-activation).
    pub fn backward<T: Real>(self, pre: &Tensor<T>, out: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
        let mut g = grad.clone();
        match self {
            Activation::Linear => {}
            Activation::Relu => {
                for (g, &z) in g.data_mut().iter_mut().zip(pre.data()) {
                    if z <= T::zero() {
                        *g = T::zero();
                    }
                }
            }
            Activation::Tanh => {
                for (g, &a) in g.data_mut().iter_mut().zip(out.data()) {
                    *g = *g * (T::one() - a * a);
                }
            }
            Activation::Sigmoid => {
                for (g, &a) in g.data_mut().iter_mut().zip(out.data()) {
                    *g = *g * a * (T::one() - a);
                }
            }
            Activation::Softmax => {
                for i in 0..g.rows() {
                    let s = out.row(i);
                    let row = g.row_mut(i);
                    let inner: T = row.iter().zip(s).map(|(&gi, &si)| gi * si).sum();
                    for (gi, &si) in row.iter_mut().zip(s) {
                        *gi = si * (*gi - inner);
                    }
                }
            }
        }
        g
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "linear" => Activation::Linear,
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            "softmax" => Activation::Softmax,
            other => return Err(Error::MalformedHeader(format!("unknown activation {other:?}"))),
        })
    }
}

pub fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

/// Fully connected layer, `out = act(input · weightsᵀ + bias)` with weights
/// stored (out, in).
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T: Real = f32> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub activation: Activation,
}

impl<T: Real> Dense<T> {
    /// Uniform init on ±1/√fan_in for weights and bias.
    pub fn init(inputs: usize, outputs: usize, activation: Activation, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = |n: usize| -> Vec<T> {
            (0..n)
                .map(|_| T::from_f64_lossy((2.0 * rng.uniform() - 1.0) * bound))
                .collect()
        };
        let weights = Tensor::new(vec![outputs, inputs], draw(outputs * inputs)).expect("sized");
        let bias = Tensor::new(vec![outputs], draw(outputs)).expect("sized");
        Self {
            weights,
            bias,
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn pre_activation(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        affine(&self.weights, &self.bias, input)
    }

    pub fn cast<U: Real>(&self) -> Dense<U> {
        Dense {
            weights: self.weights.cast(),
            bias: self.bias.cast(),
            activation: self.activation,
        }
    }
}

fn affine<T: Real>(weights: &Tensor<T>, bias: &Tensor<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    let ws = weights.shape();
    if ws.len() != 2 || input.shape().len() != 2 || input.shape()[1] != ws[1] {
        return Err(Error::ShapeMismatch {
            op: "dense_forward (weights vs input)",
            left: ws.to_vec(),
            right: input.shape().to_vec(),
        });
    }
    if bias.shape() != [ws[0]] {
        return Err(Error::ShapeMismatch {
            op: "dense_forward (weights vs bias)",
            left: ws.to_vec(),
            right: bias.shape().to_vec(),
        });
    }
    let (batch, inputs, outputs) = (input.rows(), ws[1], ws[0]);
    let mut out = Tensor::zeros(&[batch, outputs]);
    for i in 0..batch {
        out.row_mut(i).copy_from_slice(bias.data());
    }
    T::gemm(
        batch,
        inputs,
        outputs,
        T::one(),
        input.data(),
        inputs as isize,
        1,
        weights.data(),
        1,
        inputs as isize,
        T::one(),
        out.data_mut(),
        outputs as isize,
        1,
    );
    Ok(out)
}

/// One dense layer forward pass: weights (out, in), bias (out), input (batch, in).
pub fn dense_forward<T: Real>(
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    input: &Tensor<T>,
    activation: Activation,
) -> Result<Tensor<T>> {
    Ok(activation.apply(&affine(weights, bias, input)?))
}
