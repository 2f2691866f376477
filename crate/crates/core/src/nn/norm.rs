//! Per-channel batch normalization.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Values kept from the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache {
    /// Normalized input (train mode only).
    xhat: Option<Vec<f32>>,
    inv_std: Vec<f32>,
}

/// Running statistics, borrowed mutably so train mode can update them.
pub struct RunningStats<'a> {
    pub mean: &'a mut [f32],
    pub var: &'a mut [f32],
}

fn check_channels(input: &Tensor, len: usize, what: &'static str) -> Result<()> {
    if len != input.shape().c {
        return Err(Error::Dimension { op: "batchnorm", axis: what, expected: input.shape().c, actual: len });
    }
    Ok(())
}

/// Train-mode batch norm: normalizes with batch statistics over `(n, h, w)` and
/// folds them into the running statistics with weight `momentum`.
pub fn batchnorm_train(
    input: &Tensor,
    scale: &[f32],
    shift: &[f32],
    stats: RunningStats<'_>,
    momentum: f32,
    eps: f32,
) -> Result<(Tensor, BatchNormCache)> {
    let s = input.shape();
    check_channels(input, scale.len(), "scale")?;
    check_channels(input, shift.len(), "shift")?;
    check_channels(input, stats.mean.len(), "running mean")?;
    check_channels(input, stats.var.len(), "running var")?;
    let count = s.n * s.plane();
    if count == 0 {
        return Err(Error::Invalid(
            "batchnorm: train mode needs at least one element per channel".into(),
        ));
    }
    let plane = s.plane();
    let mut out = Tensor::zeros(s);
    let mut xhat = vec![0.0f32; s.numel()];
    let mut inv_std = vec![0.0f32; s.c];
    for c in 0..s.c {
        let mut sum = 0.0f64;
        let mut sq = 0.0f64;
        for n in 0..s.n {
            let off = (n * s.c + c) * plane;
            for &v in &input.data()[off..off + plane] {
                sum += v as f64;
                sq += (v as f64) * (v as f64);
            }
        }
        let mean = sum / count as f64;
        let var = (sq / count as f64 - mean * mean).max(0.0);
        let istd = 1.0 / (var + eps as f64).sqrt();
        inv_std[c] = istd as f32;
        let unbiased = if count > 1 { var * count as f64 / (count - 1) as f64 } else { var };
        stats.mean[c] = ((1.0 - momentum as f64) * stats.mean[c] as f64 + momentum as f64 * mean) as f32;
        stats.var[c] = ((1.0 - momentum as f64) * stats.var[c] as f64 + momentum as f64 * unbiased) as f32;
        for n in 0..s.n {
            let off = (n * s.c + c) * plane;
            for i in off..off + plane {
                let xh = ((input.data()[i] as f64 - mean) * istd) as f32;
                xhat[i] = xh;
                out.data_mut()[i] = scale[c] * xh + shift[c];
            }
        }
    }
    Ok((out, BatchNormCache { xhat: Some(xhat), inv_std }))
}

/// Eval-mode batch norm: a fixed per-channel affine map from running statistics.
pub fn batchnorm_eval(
    input: &Tensor,
    scale: &[f32],
    shift: &[f32],
    mean: &[f32],
    var: &[f32],
    eps: f32,
) -> Result<(Tensor, BatchNormCache)> {
    let s = input.shape();
    check_channels(input, scale.len(), "scale")?;
    check_channels(input, shift.len(), "shift")?;
    check_channels(input, mean.len(), "running mean")?;
    check_channels(input, var.len(), "running var")?;
    let plane = s.plane();
    let inv_std: Vec<f32> = var.iter().map(|&v| (1.0 / (v as f64 + eps as f64).sqrt()) as f32).collect();
    let mut out = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let a = scale[c] * inv_std[c];
            let b = shift[c] - mean[c] * a;
            let off = (n * s.c + c) * plane;
            for (o, &x) in out.data_mut()[off..off + plane].iter_mut().zip(&input.data()[off..off + plane]) {
                *o = a * x + b;
            }
        }
    }
    Ok((out, BatchNormCache { xhat: None, inv_std }))
}

#[derive(Debug)]
pub struct BatchNormGrads {
    pub input: Tensor,
    pub scale: Vec<f32>,
    pub shift: Vec<f32>,
}

/// Backward pass for either mode. In eval mode the scale gradient needs the
/// forward input, which must then be passed as `input`.
pub fn batchnorm_backward(
    cache: &BatchNormCache,
    input: Option<&Tensor>,
    scale: &[f32],
    mean: &[f32],
    grad_out: &Tensor,
) -> Result<BatchNormGrads> {
    let s = grad_out.shape();
    let plane = s.plane();
    let count = (s.n * plane) as f64;
    let mut grad_in = Tensor::zeros(s);
    let mut d_scale = vec![0.0f32; s.c];
    let mut d_shift = vec![0.0f32; s.c];
    let dy = grad_out.data();
    for c in 0..s.c {
        let offsets = (0..s.n).map(|n| (n * s.c + c) * plane);
        let istd = cache.inv_std[c] as f64;
        let mut sum_dy = 0.0f64;
        let mut sum_dy_xhat = 0.0f64;
        for off in offsets.clone() {
            for i in off..off + plane {
                let xh = match (&cache.xhat, input) {
                    (Some(xhat), _) => xhat[i] as f64,
                    (None, Some(x)) => (x.data()[i] as f64 - mean[c] as f64) * istd,
                    (None, None) => 0.0,
                };
                sum_dy += dy[i] as f64;
                sum_dy_xhat += dy[i] as f64 * xh;
            }
        }
        d_shift[c] = sum_dy as f32;
        d_scale[c] = sum_dy_xhat as f32;
        let gamma = scale[c] as f64;
        match &cache.xhat {
            Some(xhat) => {
                for off in offsets {
                    for i in off..off + plane {
                        let v = gamma * istd / count
                            * (count * dy[i] as f64 - sum_dy - xhat[i] as f64 * sum_dy_xhat);
                        grad_in.data_mut()[i] = v as f32;
                    }
                }
            }
            None => {
                let a = (gamma * istd) as f32;
                for off in offsets {
                    for i in off..off + plane {
                        grad_in.data_mut()[i] = a * dy[i];
                    }
                }
            }
        }
    }
    Ok(BatchNormGrads { input: grad_in, scale: d_scale, shift: d_shift })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn sample(shape: Shape) -> Tensor {
        let data = (0..shape.numel()).map(|i| ((i * 37 % 11) as f32) * 0.3 - 1.2).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn eval_identity_parameters() {
        let x = sample(Shape::new(2, 3, 4, 4));
        let (y, _) = batchnorm_eval(&x, &[1.0; 3], &[0.0; 3], &[0.0; 3], &[1.0; 3], 1e-5).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0));
        }
    }

    #[test]
    fn train_output_has_affine_moments() {
        let x = sample(Shape::new(3, 2, 5, 5));
        let (scale, shift) = ([1.5f32, 0.5], [0.25f32, -2.0]);
        let mut mean = vec![0.0; 2];
        let mut var = vec![1.0; 2];
        let stats = RunningStats { mean: &mut mean, var: &mut var };
        let (y, _) = batchnorm_train(&x, &scale, &shift, stats, 0.1, 1e-5).unwrap();
        let s = y.shape();
        for c in 0..2 {
            let vals: Vec<f64> = (0..s.n)
                .flat_map(|n| {
                    let off = (n * s.c + c) * s.plane();
                    y.data()[off..off + s.plane()].to_vec()
                })
                .map(|v| v as f64)
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!((m - shift[c] as f64).abs() < 1e-4, "mean {m}");
            assert!((v - (scale[c] as f64).powi(2)).abs() < 1e-3 * (scale[c] as f64).powi(2) + 1e-4, "var {v}");
        }
        assert!(mean.iter().all(|m| m.abs() > 0.0));
    }

    #[test]
    fn empty_batch_is_error() {
        let x = Tensor::zeros(Shape::new(0, 2, 3, 3));
        let mut mean = vec![0.0; 2];
        let mut var = vec![1.0; 2];
        let stats = RunningStats { mean: &mut mean, var: &mut var };
        assert!(batchnorm_train(&x, &[1.0; 2], &[0.0; 2], stats, 0.1, 1e-5).is_err());
    }
}
