//! A fixed layer list with a recorded tape for reverse-mode gradients.

use super::activation::{relu, relu_backward, sigmoid, sigmoid_backward};
use super::conv::{conv2d, conv2d_backward};
use super::norm::{batchnorm_backward, batchnorm_eval, batchnorm_train, BatchNormCache, RunningStats};
use super::param::{ParamId, ParamStore};
use super::pool::{maxpool2, maxpool2_backward};
use crate::error::Result;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv {
        weight: ParamId,
        bias: ParamId,
        stride: usize,
        padding: usize,
    },
    BatchNorm {
        scale: ParamId,
        shift: ParamId,
        mean: ParamId,
        var: ParamId,
        momentum: f32,
        eps: f32,
    },
    Relu,
    Sigmoid,
    MaxPool2,
}

#[derive(Debug)]
enum Record {
    Conv { input: Tensor },
    BatchNorm { cache: BatchNormCache, input: Option<Tensor> },
    Relu { output: Tensor },
    Sigmoid { output: Tensor },
    MaxPool { input_shape: Shape, argmax: Vec<u32> },
}

/// Forward-pass records, consumed by the backward pass.
#[derive(Debug)]
pub struct Tape {
    records: Vec<Record>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Sequential {
    layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Sequential { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    fn step(&self, layer: &Layer, params: &ParamStore, x: Tensor, tape: Option<&mut Vec<Record>>) -> Result<Tensor> {
        let y = match layer {
            Layer::Conv { weight, bias, stride, padding } => {
                let y = conv2d(&x, params.get(*weight), params.get(*bias), *stride, *padding)?;
                if let Some(t) = tape {
                    t.push(Record::Conv { input: x });
                }
                y
            }
            Layer::BatchNorm { scale, shift, mean, var, eps, .. } => {
                let (y, cache) = batchnorm_eval(
                    &x,
                    params.get(*scale).data(),
                    params.get(*shift).data(),
                    params.get(*mean).data(),
                    params.get(*var).data(),
                    *eps,
                )?;
                if let Some(t) = tape {
                    t.push(Record::BatchNorm { cache, input: Some(x) });
                }
                y
            }
            Layer::Relu => {
                let y = relu(&x);
                if let Some(t) = tape {
                    t.push(Record::Relu { output: y.clone() });
                }
                y
            }
            Layer::Sigmoid => {
                let y = sigmoid(&x);
                if let Some(t) = tape {
                    t.push(Record::Sigmoid { output: y.clone() });
                }
                y
            }
            Layer::MaxPool2 => {
                let (y, argmax) = maxpool2(&x)?;
                if let Some(t) = tape {
                    t.push(Record::MaxPool { input_shape: x.shape(), argmax });
                }
                y
            }
        };
        y.ensure_finite("forward")?;
        Ok(y)
    }

    /// Eval-mode forward without recording.
    pub fn forward_eval(&self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = self.step(layer, params, h, None)?;
        }
        Ok(h)
    }

    /// Eval-mode forward returning the output of every layer in order.
    pub fn forward_eval_collect(&self, params: &ParamStore, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut outs: Vec<Tensor> = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            h = self.step(layer, params, h, None)?;
            outs.push(h.clone());
        }
        Ok(outs)
    }

    /// Eval-mode forward that records a tape, for backpropagating through a
    /// frozen network.
    pub fn forward_eval_taped(&self, params: &ParamStore, x: Tensor) -> Result<(Tensor, Tape)> {
        let mut records = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for layer in &self.layers {
            h = self.step(layer, params, h, Some(&mut records))?;
        }
        Ok((h, Tape { records }))
    }

    /// Train-mode forward: batch norm uses batch statistics and updates the
    /// running statistics in `params`.
    pub fn forward_train(&self, params: &mut ParamStore, x: Tensor) -> Result<(Tensor, Tape)> {
        let mut records = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for layer in &self.layers {
            h = match layer {
                Layer::BatchNorm { scale, shift, mean, var, momentum, eps } => {
                    let scale_v = params.get(*scale).data().to_vec();
                    let shift_v = params.get(*shift).data().to_vec();
                    let mut mean_v = params.get(*mean).data().to_vec();
                    let mut var_v = params.get(*var).data().to_vec();
                    let stats = RunningStats { mean: &mut mean_v, var: &mut var_v };
                    let (y, cache) = batchnorm_train(&h, &scale_v, &shift_v, stats, *momentum, *eps)?;
                    params.get_mut(*mean).data_mut().copy_from_slice(&mean_v);
                    params.get_mut(*var).data_mut().copy_from_slice(&var_v);
                    records.push(Record::BatchNorm { cache, input: None });
                    y.ensure_finite("forward")?;
                    y
                }
                other => self.step(other, params, h, Some(&mut records))?,
            };
        }
        Ok((h, Tape { records }))
    }

    fn backward_impl(
        &self,
        params: &ParamStore,
        tape: Tape,
        grad: Tensor,
        mut sink: Option<&mut Vec<(ParamId, Vec<f32>)>>,
    ) -> Result<Tensor> {
        let mut g = grad;
        for (layer, record) in self.layers.iter().zip(tape.records).rev() {
            g = match (layer, record) {
                (Layer::Conv { weight, bias, stride, padding }, Record::Conv { input }) => {
                    let w = params.get(*weight);
                    let wants = sink.is_some() && w.requires_grad();
                    let grads = conv2d_backward(&input, w, &g, *stride, *padding, wants)?;
                    if let (Some(s), Some(gw), Some(gb)) = (sink.as_deref_mut(), grads.weight, grads.bias) {
                        s.push((*weight, gw));
                        s.push((*bias, gb));
                    }
                    grads.input
                }
                (Layer::BatchNorm { scale, shift, mean, .. }, Record::BatchNorm { cache, input }) => {
                    let grads = batchnorm_backward(
                        &cache,
                        input.as_ref(),
                        params.get(*scale).data(),
                        params.get(*mean).data(),
                        &g,
                    )?;
                    if let Some(s) = sink.as_deref_mut() {
                        if params.get(*scale).requires_grad() {
                            s.push((*scale, grads.scale));
                            s.push((*shift, grads.shift));
                        }
                    }
                    grads.input
                }
                (Layer::Relu, Record::Relu { output }) => relu_backward(&output, &g),
                (Layer::Sigmoid, Record::Sigmoid { output }) => sigmoid_backward(&output, &g),
                (Layer::MaxPool2, Record::MaxPool { input_shape, argmax }) => {
                    maxpool2_backward(input_shape, &argmax, &g)?
                }
                (layer, record) => {
                    return Err(crate::Error::Invalid(format!(
                        "tape record {record:?} does not belong to layer {layer:?}"
                    )))
                }
            };
        }
        Ok(g)
    }

    /// Backpropagates `grad` (w.r.t. the network output), accumulating
    /// parameter gradients into `params`. Returns the input gradient.
    pub fn backward(&self, params: &mut ParamStore, tape: Tape, grad: Tensor) -> Result<Tensor> {
        let mut sink = Vec::new();
        let gin = self.backward_impl(params, tape, grad, Some(&mut sink))?;
        for (id, delta) in sink {
            params.get_mut(id).accumulate_grad(&delta);
        }
        Ok(gin)
    }

    /// Input gradient only; parameters are neither read for gradients nor touched.
    pub fn backward_frozen(&self, params: &ParamStore, tape: Tape, grad: Tensor) -> Result<Tensor> {
        self.backward_impl(params, tape, grad, None)
    }
}
