//! A built QF predictor: architecture, layers, parameters and training metadata.

use serde::{Deserialize, Serialize};

use super::arch::{ArchSpec, HeadMode};
use crate::data::CLASS_QUALITIES;
use crate::error::{Error, Result};
use crate::nn::{ParamStore, Sequential, Tape};
use crate::raster::ImageBuffer;
use crate::tensor::{Shape, Tensor};

/// Provenance carried in checkpoints.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub steps: u64,
    pub seed: u64,
    pub final_train_loss: Option<f64>,
    pub final_val_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct QfModel {
    arch: ArchSpec,
    net: Sequential,
    pub params: ParamStore,
    /// Inputs are `raw / 255` when set, raw byte values otherwise.
    pub normalized_input: bool,
    pub meta: TrainingMeta,
}

impl QfModel {
    pub fn new(arch: ArchSpec, seed: u64) -> Result<Self> {
        let (net, params) = arch.build(seed)?;
        Ok(QfModel { arch, net, params, normalized_input: true, meta: TrainingMeta { seed, ..Default::default() } })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn net(&self) -> &Sequential {
        &self.net
    }

    pub fn mode(&self) -> HeadMode {
        self.arch.mode
    }

    pub fn channels(&self) -> usize {
        self.arch.in_channels
    }

    /// Converts an image to a `(1, C, H, W)` input under this model's scaling.
    pub fn image_tensor(&self, image: &ImageBuffer) -> Result<Tensor> {
        if image.channels() != self.channels() {
            return Err(Error::Dimension {
                op: "forward_qf",
                axis: "channel",
                expected: self.channels(),
                actual: image.channels(),
            });
        }
        let mut t = image.to_tensor();
        if !self.normalized_input {
            t.data_mut().iter_mut().for_each(|v| *v *= 255.0);
        }
        Ok(t)
    }

    pub(crate) fn check_input(&self, shape: Shape) -> Result<()> {
        if shape.c != self.channels() {
            return Err(Error::Dimension { op: "forward_qf", axis: "channel", expected: self.channels(), actual: shape.c });
        }
        let min = self.arch.min_input();
        for (axis, actual) in [("height", shape.h), ("width", shape.w)] {
            if actual < min {
                return Err(Error::TooSmall { op: "forward_qf", axis, minimum: min, actual });
            }
        }
        Ok(())
    }

    /// Eval-mode QF map `(N, 1 | 5, h', w')`.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input.shape())?;
        self.net.forward_eval(&self.params, input)
    }

    /// Eval-mode forward keeping a tape for input gradients through the frozen net.
    pub fn forward_taped(&self, input: Tensor) -> Result<(Tensor, Tape)> {
        self.check_input(input.shape())?;
        self.net.forward_eval_taped(&self.params, input)
    }

    /// Input gradient of a taped forward; parameters stay untouched.
    pub fn backward_frozen(&self, tape: Tape, grad: Tensor) -> Result<Tensor> {
        self.net.backward_frozen(&self.params, tape, grad)
    }

    /// Per-layer eval outputs.
    pub fn forward_collect(&self, input: &Tensor) -> Result<Vec<Tensor>> {
        self.check_input(input.shape())?;
        self.net.forward_eval_collect(&self.params, input)
    }

    /// Train-mode forward (batch statistics, running stats updated).
    pub fn forward_train(&mut self, input: Tensor) -> Result<(Tensor, Tape)> {
        self.check_input(input.shape())?;
        self.net.forward_train(&mut self.params, input)
    }

    pub fn backward(&mut self, tape: Tape, grad: Tensor) -> Result<Tensor> {
        self.net.backward(&mut self.params, tape, grad)
    }

    /// Normalized quality per output cell, `(N, 1, h', w')`. Classification
    /// logits become the softmax-expected class quality.
    pub fn quality_map(&self, input: &Tensor) -> Result<Tensor> {
        let out = self.forward(input)?;
        Ok(match self.mode() {
            HeadMode::Regression => out,
            HeadMode::Classification => expected_quality(&out),
        })
    }

    /// Mean normalized quality over the output map of a whole image.
    pub fn mean_quality(&self, image: &ImageBuffer) -> Result<f64> {
        Ok(self.quality_map(&self.image_tensor(image)?)?.mean())
    }

    /// Most likely class per cell of a classification output.
    pub fn predicted_classes(logits: &Tensor) -> Vec<usize> {
        let s = logits.shape();
        let plane = s.plane();
        let mut out = Vec::with_capacity(s.n * plane);
        for n in 0..s.n {
            for p in 0..plane {
                let best = (0..s.c)
                    .max_by(|&a, &b| {
                        let (va, vb) = (logits.data()[(n * s.c + a) * plane + p], logits.data()[(n * s.c + b) * plane + p]);
                        va.total_cmp(&vb).then(b.cmp(&a))
                    })
                    .unwrap_or(0);
                out.push(best);
            }
        }
        out
    }
}

fn expected_quality(logits: &Tensor) -> Tensor {
    let s = logits.shape();
    let plane = s.plane();
    let mut out = Tensor::zeros(Shape::new(s.n, 1, s.h, s.w));
    for n in 0..s.n {
        for p in 0..plane {
            let at = |c: usize| logits.data()[(n * s.c + c) * plane + p] as f64;
            let max = (0..s.c).map(at).fold(f64::NEG_INFINITY, f64::max);
            let (mut z, mut acc) = (0.0, 0.0);
            for c in 0..s.c {
                let e = (at(c) - max).exp();
                z += e;
                acc += e * CLASS_QUALITIES[c] as f64 / 100.0;
            }
            out.data_mut()[n * plane + p] = (acc / z) as f32;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_half() {
        let arch = ArchSpec::with_widths(1, HeadMode::Regression, [4, 4, 4, 4, 4, 4]).unwrap();
        let mut m = QfModel::new(arch, 3).unwrap();
        for p in m.params.iter_mut() {
            if p.name.starts_with("conv") {
                p.value.data_mut().fill(0.0);
            }
        }
        let x = Tensor::full(Shape::new(2, 1, 40, 40), 0.3);
        let y = m.forward(&x).unwrap();
        assert_eq!(y.shape(), Shape::new(2, 1, 5, 5));
        assert!(y.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn too_small_input_names_minimum() {
        let arch = ArchSpec::default_for(1, HeadMode::Regression).unwrap();
        let m = QfModel::new(arch, 0).unwrap();
        let err = m.forward(&Tensor::zeros(Shape::new(1, 1, 23, 30))).unwrap_err();
        assert!(matches!(err, Error::TooSmall { minimum: 24, actual: 23, .. }), "{err}");
    }

    #[test]
    fn classification_argmax_and_expectation() {
        let mut logits = Tensor::zeros(Shape::new(1, 5, 1, 2));
        logits.data_mut()[3 * 2] = 5.0;
        logits.data_mut()[1] = 1.0;
        assert_eq!(QfModel::predicted_classes(&logits), vec![3, 0]);
        let q = expected_quality(&Tensor::zeros(Shape::new(1, 5, 1, 1)));
        assert!((q.data()[0] - 0.402).abs() < 1e-6);
    }
}
