use crate::error::{Error, Result};
use crate::nn::dense::{Activation, Dense};
use crate::rng::SeededRng;
use crate::tensor::{Real, Tensor};

/// Stack of dense layers. Parameters are ordered `[w0, b0, w1, b1, ...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T: Real = f32> {
    layers: Vec<Dense<T>>,
}

/// Intermediates recorded by [`Mlp::forward_trace`], consumed by [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct Trace<T: Real> {
    inputs: Vec<Tensor<T>>,
    pre: Vec<Tensor<T>>,
    output: Tensor<T>,
}

impl<T: Real> Trace<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }

    /// Pre-activation of the last layer (the logits for softmax/sigmoid heads).
    pub fn logits(&self) -> &Tensor<T> {
        self.pre.last().expect("non-empty network")
    }
}

/// Where the upstream gradient enters the network.
pub enum OutputGrad<'a, T: Real> {
    /// dL/d(final activated output).
    Activated(&'a Tensor<T>),
    /// dL/d(final pre-activation), bypassing the head's activation Jacobian.
    PreActivation(&'a Tensor<T>),
}

pub struct Gradients<T: Real> {
    /// One tensor per parameter, `None` when parameter gradients were not requested.
    pub params: Option<Vec<Tensor<T>>>,
    pub input: Tensor<T>,
}

impl<T: Real> Mlp<T> {
    pub fn new(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::ShapeMismatch {
                    op: "Mlp::new (consecutive layers)",
                    left: pair[0].weights.shape().to_vec(),
                    right: pair[1].weights.shape().to_vec(),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Random init from `widths` (len = layers + 1) and one activation per layer.
    pub fn init(widths: &[usize], activations: &[Activation], rng: &mut SeededRng) -> Result<Self> {
        if widths.len() != activations.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} widths need {} activations, got {}",
                widths.len(),
                widths.len().saturating_sub(1),
                activations.len()
            )));
        }
        let layers = widths
            .windows(2)
            .zip(activations)
            .map(|(w, &a)| Dense::init(w[0], w[1], a, rng))
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| [&l.weights, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias])
            .collect()
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            layers: self.layers.iter().map(Dense::cast).collect(),
        }
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.activation.apply(&layer.pre_activation(&x)?);
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: &Tensor<T>) -> Result<Trace<T>> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let z = layer.pre_activation(&x)?;
            let a = layer.activation.apply(&z);
            inputs.push(x);
            pre.push(z);
            x = a;
        }
        Ok(Trace {
            inputs,
            pre,
            output: x,
        })
    }

    /// Reverse-mode pass over a recorded trace.
    ///
    /// Input gradients are always produced; parameter gradients only when
    /// `want_params` (frozen networks skip the weight products).
    pub fn backward(&self, trace: &Trace<T>, upstream: OutputGrad<'_, T>, want_params: bool) -> Result<Gradients<T>> {
        let last = self.layers.len() - 1;
        let mut delta = match upstream {
            OutputGrad::Activated(g) => {
                g.ensure_shape("backward (upstream vs output)", trace.output.shape())?;
                self.layers[last]
                    .activation
                    .backward(&trace.pre[last], &trace.output, g)
            }
            OutputGrad::PreActivation(g) => {
                g.ensure_shape("backward (upstream vs logits)", trace.pre[last].shape())?;
                g.clone()
            }
        };
        let mut grads = if want_params {
            Some(Vec::with_capacity(2 * self.layers.len()))
        } else {
            None
        };
        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            let x = &trace.inputs[idx];
            let (batch, inputs, outputs) = (x.rows(), layer.inputs(), layer.outputs());
            if let Some(g) = grads.as_mut() {
                // dW = deltaᵀ · x, shape (out, in)
                let mut dw = Tensor::zeros(&[outputs, inputs]);
                T::gemm(
                    outputs,
                    batch,
                    inputs,
                    T::one(),
                    delta.data(),
                    1,
                    outputs as isize,
                    x.data(),
                    inputs as isize,
                    1,
                    T::zero(),
                    dw.data_mut(),
                    inputs as isize,
                    1,
                );
                let mut db = Tensor::zeros(&[outputs]);
                for i in 0..batch {
                    for (acc, &d) in db.data_mut().iter_mut().zip(delta.row(i)) {
                        *acc = *acc + d;
                    }
                }
                g.push(db);
                g.push(dw);
            }
            // dx = delta · W, shape (batch, in)
            let mut dx = Tensor::zeros(&[batch, inputs]);
            T::gemm(
                batch,
                outputs,
                inputs,
                T::one(),
                delta.data(),
                outputs as isize,
                1,
                layer.weights.data(),
                inputs as isize,
                1,
                T::zero(),
                dx.data_mut(),
                inputs as isize,
                1,
            );
            delta = if idx > 0 {
                let prev = &self.layers[idx - 1];
                prev.activation.backward(&trace.pre[idx - 1], x, &dx)
            } else {
                dx
            };
        }
        let params = grads.map(|mut g| {
            g.reverse();
            g
        });
        Ok(Gradients {
            params,
            input: delta,
        })
    }
}
