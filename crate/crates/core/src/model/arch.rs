//! Architecture description for the QF predictor and its derived geometry.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{conv_out_len, Layer, ParamStore, Sequential};
use crate::tensor::{Shape, Tensor};

/// Number of classes in classification mode (q in {1, 20, 40, 60, 80}).
pub const NUM_CLASSES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadMode {
    /// One sigmoid channel predicting `q / 100`.
    Regression,
    /// Five logit channels, one per quality class.
    Classification,
}

impl HeadMode {
    pub fn out_channels(self) -> usize {
        match self {
            HeadMode::Regression => 1,
            HeadMode::Classification => NUM_CLASSES,
        }
    }
}

impl std::str::FromStr for HeadMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(HeadMode::Regression),
            "classification" => Ok(HeadMode::Classification),
            other => Err(Error::Invalid(format!(
                "unknown mode `{other}` (expected regression or classification)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv { k: usize, in_ch: usize, out_ch: usize },
    Maxpool2,
}

/// Ordered conv/pool list. Every conv but the last is followed by batch norm
/// and ReLU; the last is followed by a sigmoid in regression mode and nothing
/// in classification mode. All convs are unpadded with stride 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub in_channels: usize,
    pub mode: HeadMode,
    pub layers: Vec<LayerSpec>,
}

/// Channel widths of the six hidden convs in the default network.
pub const DEFAULT_WIDTHS: [usize; 6] = [32, 64, 128, 128, 128, 64];

pub const BN_MOMENTUM: f32 = 0.1;
pub const BN_EPS: f32 = 1e-5;

impl ArchSpec {
    /// conv3 conv3 pool conv3 conv3 pool conv3 conv1 conv1 with default widths.
    pub fn default_for(channels: usize, mode: HeadMode) -> Result<Self> {
        Self::with_widths(channels, mode, DEFAULT_WIDTHS)
    }

    /// The default layer sequence with custom hidden widths.
    pub fn with_widths(channels: usize, mode: HeadMode, widths: [usize; 6]) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::range("input channels", format!("{channels} (expected 1 or 3)")));
        }
        let [a, b, c, d, e, f] = widths;
        let conv = |k, in_ch, out_ch| LayerSpec::Conv { k, in_ch, out_ch };
        let spec = ArchSpec {
            in_channels: channels,
            mode,
            layers: vec![
                conv(3, channels, a),
                conv(3, a, b),
                LayerSpec::Maxpool2,
                conv(3, b, c),
                conv(3, c, d),
                LayerSpec::Maxpool2,
                conv(3, d, e),
                conv(1, e, f),
                conv(1, f, mode.out_channels()),
            ],
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn convs(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.layers.iter().filter_map(|l| match *l {
            LayerSpec::Conv { k, in_ch, out_ch } => Some((k, in_ch, out_ch)),
            LayerSpec::Maxpool2 => None,
        })
    }

    /// Checks the structural constraints of the predictor.
    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::Invalid(format!("architecture: {m}")));
        let convs: Vec<_> = self.convs().collect();
        let pools = self.layers.iter().filter(|l| matches!(l, LayerSpec::Maxpool2)).count();
        if convs.len() != 7 {
            return invalid(format!("{} conv layers, expected 7", convs.len()));
        }
        if pools != 2 {
            return invalid(format!("{pools} max-pool layers, expected 2"));
        }
        if convs[5].0 != 1 || convs[6].0 != 1 {
            return invalid("the final two convs must be 1x1".into());
        }
        if !matches!(self.layers.last(), Some(LayerSpec::Conv { .. })) {
            return invalid("the network must end with a conv".into());
        }
        let mut ch = self.in_channels;
        for (i, &(k, in_ch, out_ch)) in convs.iter().enumerate() {
            if in_ch != ch {
                return invalid(format!("conv {i} expects {in_ch} channels, receives {ch}"));
            }
            if k == 0 || out_ch == 0 {
                return invalid(format!("conv {i} has an empty kernel or no outputs"));
            }
            ch = out_ch;
        }
        if ch != self.mode.out_channels() {
            return invalid(format!(
                "head emits {ch} channels, {:?} mode needs {}",
                self.mode,
                self.mode.out_channels()
            ));
        }
        if self.downsampling() != 4 {
            return invalid(format!("total downsampling {}, expected 4", self.downsampling()));
        }
        Ok(())
    }

    pub fn downsampling(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Maxpool2))
            .map(|_| 2)
            .product()
    }

    /// Receptive field (in input pixels) of one output cell.
    pub fn receptive_field(&self) -> usize {
        let (mut rf, mut jump) = (1, 1);
        for l in &self.layers {
            match *l {
                LayerSpec::Conv { k, .. } => rf += (k - 1) * jump,
                LayerSpec::Maxpool2 => {
                    rf += jump;
                    jump *= 2;
                }
            }
        }
        rf
    }

    /// Output extent along one axis for an input extent, or `None` when empty.
    pub fn output_len(&self, input: usize) -> Option<usize> {
        let mut n = input;
        for l in &self.layers {
            n = match *l {
                LayerSpec::Conv { k, .. } => conv_out_len(n, k, 1, 0)?,
                LayerSpec::Maxpool2 if n >= 2 => n / 2,
                LayerSpec::Maxpool2 => return None,
            };
            if n == 0 {
                return None;
            }
        }
        Some(n)
    }

    /// Smallest input extent that yields at least one output cell.
    pub fn min_input(&self) -> usize {
        (1..).find(|&n| self.output_len(n).is_some()).expect("some size works")
    }

    /// Total scalar parameter count including batch-norm running statistics.
    pub fn param_count(&self) -> usize {
        let convs: Vec<_> = self.convs().collect();
        let last = convs.len() - 1;
        convs
            .iter()
            .enumerate()
            .map(|(i, &(k, in_ch, out_ch))| {
                let bn = if i < last { 4 * out_ch } else { 0 };
                k * k * in_ch * out_ch + out_ch + bn
            })
            .sum()
    }

    /// Instantiates the network with He-normal conv weights, zero biases and
    /// identity batch norm.
    pub fn build(&self, seed: u64) -> Result<(Sequential, ParamStore)> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut layers = Vec::new();
        let n_convs = self.convs().count();
        let mut conv_idx = 0;
        for l in &self.layers {
            match *l {
                LayerSpec::Maxpool2 => layers.push(Layer::MaxPool2),
                LayerSpec::Conv { k, in_ch, out_ch } => {
                    let fan_in = (k * k * in_ch) as f64;
                    let std = (2.0 / fan_in).sqrt();
                    let shape = Shape::new(out_ch, in_ch, k, k);
                    let w: Vec<f32> = (0..shape.numel())
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            (z * std) as f32
                        })
                        .collect();
                    let weight = params.add(
                        format!("conv{conv_idx}.weight"),
                        Tensor::from_vec(shape, w)?.with_requires_grad(true),
                    )?;
                    let bias = params.add(
                        format!("conv{conv_idx}.bias"),
                        Tensor::channel_vector(vec![0.0; out_ch]).with_requires_grad(true),
                    )?;
                    layers.push(Layer::Conv { weight, bias, stride: 1, padding: 0 });
                    if conv_idx + 1 < n_convs {
                        let scale = params.add(
                            format!("bn{conv_idx}.scale"),
                            Tensor::channel_vector(vec![1.0; out_ch]).with_requires_grad(true),
                        )?;
                        let shift = params.add(
                            format!("bn{conv_idx}.shift"),
                            Tensor::channel_vector(vec![0.0; out_ch]).with_requires_grad(true),
                        )?;
                        let mean = params.add(
                            format!("bn{conv_idx}.running_mean"),
                            Tensor::channel_vector(vec![0.0; out_ch]),
                        )?;
                        let var = params.add(
                            format!("bn{conv_idx}.running_var"),
                            Tensor::channel_vector(vec![1.0; out_ch]),
                        )?;
                        layers.push(Layer::BatchNorm {
                            scale,
                            shift,
                            mean,
                            var,
                            momentum: BN_MOMENTUM,
                            eps: BN_EPS,
                        });
                        layers.push(Layer::Relu);
                    } else if self.mode == HeadMode::Regression {
                        layers.push(Layer::Sigmoid);
                    }
                    conv_idx += 1;
                }
            }
        }
        Ok((Sequential::new(layers), params))
    }

    /// Index into the built `Sequential` of the layer that completes conv
    /// block `conv` (its ReLU, or the bare conv for the head).
    pub fn conv_block_end(&self, conv: usize) -> Option<usize> {
        let n_convs = self.convs().count();
        if conv >= n_convs {
            return None;
        }
        let mut idx = 0usize;
        let mut seen = 0usize;
        for l in &self.layers {
            match l {
                LayerSpec::Maxpool2 => idx += 1,
                LayerSpec::Conv { .. } => {
                    let block = if seen + 1 < n_convs { 3 } else { 1 };
                    if seen == conv {
                        return Some(idx + block - 1);
                    }
                    idx += block;
                    if seen + 1 == n_convs && self.mode == HeadMode::Regression {
                        idx += 1;
                    }
                    seen += 1;
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry() {
        let a = ArchSpec::default_for(1, HeadMode::Regression).unwrap();
        assert_eq!(a.receptive_field(), 24);
        assert_eq!(a.downsampling(), 4);
        assert_eq!(a.output_len(64), Some(11));
        assert_eq!(a.output_len(23), None);
        assert_eq!(a.min_input(), 24);
        assert_eq!(a.output_len(24), Some(1));
    }

    #[test]
    fn rejects_bad_structure() {
        let mut a = ArchSpec::default_for(3, HeadMode::Classification).unwrap();
        a.layers.remove(2);
        assert!(a.validate().is_err());
        let mut b = ArchSpec::default_for(3, HeadMode::Regression).unwrap();
        b.layers[7] = LayerSpec::Conv { k: 3, in_ch: 128, out_ch: 64 };
        assert!(b.validate().is_err());
        assert!(ArchSpec::default_for(2, HeadMode::Regression).is_err());
    }

    #[test]
    fn built_params_match_count() {
        for mode in [HeadMode::Regression, HeadMode::Classification] {
            let a = ArchSpec::default_for(3, mode).unwrap();
            let (_, params) = a.build(7).unwrap();
            assert_eq!(params.numel(), a.param_count());
        }
    }

    #[test]
    fn block_end_indices() {
        let a = ArchSpec::default_for(1, HeadMode::Regression).unwrap();
        let (net, _) = a.build(0).unwrap();
        assert_eq!(a.conv_block_end(0), Some(2));
        assert_eq!(a.conv_block_end(2), Some(9));
        assert!(matches!(net.layers()[a.conv_block_end(6).unwrap()], Layer::Conv { .. }));
        assert_eq!(a.conv_block_end(7), None);
    }
}
