//! Finite-difference gradient checks.
//!
//! Every check evaluates a naive double-precision reference implementation of
//! the op at `x ± STEP` and compares the central difference with the analytic
//! gradient from the f32 backward pass. The references share no code with the
//! ops they check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::activation::{relu, relu_backward, sigmoid, sigmoid_backward};
use super::conv::{conv2d, conv2d_backward};
use super::loss::{cross_entropy_loss, l1_loss, mse_loss};
use super::norm::{batchnorm_backward, batchnorm_eval, batchnorm_train, RunningStats};
use super::pool::{maxpool2, maxpool2_backward};
use crate::tensor::{Shape, Tensor};

pub const STEP: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub name: String,
    pub max_rel_error: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error.is_finite() && self.max_rel_error < TOLERANCE
    }
}

/// Largest element-wise relative error. Entries whose magnitude is far below
/// the largest gradient are compared against 1% of that maximum instead of
/// themselves, so float rounding on near-zero entries does not dominate.
pub fn max_relative_error(analytic: &[f32], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let peak = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-2 * peak).max(1e-8);
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a as f64 - n).abs() / n.abs().max(a.abs() as f64).max(floor))
        .fold(0.0, f64::max)
}

fn central_diff(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut xs = x.to_vec();
    (0..x.len())
        .map(|i| {
            xs[i] = x[i] + STEP;
            let up = f(&xs);
            xs[i] = x[i] - STEP;
            let down = f(&xs);
            xs[i] = x[i];
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Naive direct convolution in f64.
pub fn reference_conv(x: &[f64], xs: Shape, w: &[f64], ws: Shape, b: &[f64], stride: usize, pad: usize) -> Vec<f64> {
    let oh = (xs.h + 2 * pad - ws.h) / stride + 1;
    let ow = (xs.w + 2 * pad - ws.w) / stride + 1;
    let mut out = vec![0.0; xs.n * ws.n * oh * ow];
    for n in 0..xs.n {
        for o in 0..ws.n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[o];
                    for c in 0..xs.c {
                        for ki in 0..ws.h {
                            for kj in 0..ws.w {
                                let iy = (oy * stride + ki) as isize - pad as isize;
                                let ix = (ox * stride + kj) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= xs.h as isize || ix >= xs.w as isize {
                                    continue;
                                }
                                let xv = x[((n * xs.c + c) * xs.h + iy as usize) * xs.w + ix as usize];
                                let wv = w[((o * ws.c + c) * ws.h + ki) * ws.w + kj];
                                acc += xv * wv;
                            }
                        }
                    }
                    out[((n * ws.n + o) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

/// Naive 2x2/2 max pooling in f64.
pub fn reference_maxpool(x: &[f64], s: Shape) -> Vec<f64> {
    let (oh, ow) = (s.h / 2, s.w / 2);
    let mut out = Vec::with_capacity(s.n * s.c * oh * ow);
    for nc in 0..s.n * s.c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        m = m.max(x[nc * s.h * s.w + (2 * oy + dy) * s.w + 2 * ox + dx]);
                    }
                }
                out.push(m);
            }
        }
    }
    out
}

/// Train-mode batch norm in f64 (biased batch variance).
pub fn reference_batchnorm(x: &[f64], s: Shape, scale: &[f64], shift: &[f64], eps: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    let plane = s.h * s.w;
    for c in 0..s.c {
        let idx: Vec<usize> = (0..s.n).flat_map(|n| ((n * s.c + c) * plane)..((n * s.c + c + 1) * plane)).collect();
        let m = idx.iter().map(|&i| x[i]).sum::<f64>() / idx.len() as f64;
        let v = idx.iter().map(|&i| (x[i] - m).powi(2)).sum::<f64>() / idx.len() as f64;
        for &i in &idx {
            out[i] = scale[c] * (x[i] - m) / (v + eps).sqrt() + shift[c];
        }
    }
    out
}

pub fn check_conv(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (stride, pad) = if seed % 2 == 0 { (1, 0) } else { (2, 1) };
    let xs = Shape::new(2, 3, 8, 8);
    let ws = Shape::new(4, 3, 3, 3);
    let x = Tensor::from_vec(xs, random_vec(&mut rng, xs.numel(), -1.0, 1.0)).unwrap();
    let w = Tensor::from_vec(ws, random_vec(&mut rng, ws.numel(), -0.5, 0.5)).unwrap();
    let b = Tensor::channel_vector(random_vec(&mut rng, 4, -0.5, 0.5));
    let y = conv2d(&x, &w, &b, stride, pad).unwrap();
    let r = random_vec(&mut rng, y.numel(), -1.0, 1.0);
    let rd = widen(&r);
    let grads = conv2d_backward(&x, &w, &Tensor::from_vec(y.shape(), r).unwrap(), stride, pad, true).unwrap();

    let (xd, wd, bd) = (widen(x.data()), widen(w.data()), widen(b.data()));
    let nx = central_diff(&xd, |v| dot(&rd, &reference_conv(v, xs, &wd, ws, &bd, stride, pad)));
    let nw = central_diff(&wd, |v| dot(&rd, &reference_conv(&xd, xs, v, ws, &bd, stride, pad)));
    let nb = central_diff(&bd, |v| dot(&rd, &reference_conv(&xd, xs, &wd, ws, v, stride, pad)));
    let err = max_relative_error(grads.input.data(), &nx)
        .max(max_relative_error(&grads.weight.unwrap(), &nw))
        .max(max_relative_error(&grads.bias.unwrap(), &nb));
    GradCheck { name: "conv2d".into(), max_rel_error: err }
}

pub fn check_maxpool(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = Shape::new(1, 2, 6, 6);
    // distinct values spaced well beyond the finite-difference step
    let mut vals: Vec<f32> = (0..s.numel()).map(|i| i as f32 * 0.05 - 1.0).collect();
    for i in (1..vals.len()).rev() {
        let j = rng.random_range(0..=i);
        vals.swap(i, j);
    }
    let x = Tensor::from_vec(s, vals).unwrap();
    let (y, argmax) = maxpool2(&x).unwrap();
    let r = random_vec(&mut rng, y.numel(), -1.0, 1.0);
    let rd = widen(&r);
    let g = maxpool2_backward(s, &argmax, &Tensor::from_vec(y.shape(), r).unwrap()).unwrap();
    let n = central_diff(&widen(x.data()), |v| dot(&rd, &reference_maxpool(v, s)));
    GradCheck { name: "maxpool2".into(), max_rel_error: max_relative_error(g.data(), &n) }
}

pub fn check_batchnorm(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = Shape::new(3, 2, 4, 4);
    let eps = 1e-5f32;
    let x = Tensor::from_vec(s, random_vec(&mut rng, s.numel(), -2.0, 2.0)).unwrap();
    let scale = random_vec(&mut rng, 2, 0.5, 1.5);
    let shift = random_vec(&mut rng, 2, -0.5, 0.5);
    let (mut mean, mut var) = (vec![0.0; 2], vec![1.0; 2]);
    let (y, cache) = batchnorm_train(
        &x,
        &scale,
        &shift,
        RunningStats { mean: &mut mean, var: &mut var },
        0.1,
        eps,
    )
    .unwrap();
    let r = random_vec(&mut rng, y.numel(), -1.0, 1.0);
    let rd = widen(&r);
    let g = batchnorm_backward(&cache, None, &scale, &mean, &Tensor::from_vec(s, r.clone()).unwrap()).unwrap();

    let (xd, sd, hd) = (widen(x.data()), widen(&scale), widen(&shift));
    let e = eps as f64;
    let nx = central_diff(&xd, |v| dot(&rd, &reference_batchnorm(v, s, &sd, &hd, e)));
    let ns = central_diff(&sd, |v| dot(&rd, &reference_batchnorm(&xd, s, v, &hd, e)));
    let nh = central_diff(&hd, |v| dot(&rd, &reference_batchnorm(&xd, s, &sd, v, e)));
    let mut err = max_relative_error(g.input.data(), &nx)
        .max(max_relative_error(&g.scale, &ns))
        .max(max_relative_error(&g.shift, &nh));

    // eval mode: fixed affine map per channel
    let run_mean = random_vec(&mut rng, 2, -0.5, 0.5);
    let run_var = random_vec(&mut rng, 2, 0.5, 2.0);
    let (_, cache) = batchnorm_eval(&x, &scale, &shift, &run_mean, &run_var, eps).unwrap();
    let ge = batchnorm_backward(&cache, Some(&x), &scale, &run_mean, &Tensor::from_vec(s, r).unwrap()).unwrap();
    let (md, vd) = (widen(&run_mean), widen(&run_var));
    let eval_ref = |v: &[f64], sc: &[f64]| -> Vec<f64> {
        let plane = s.h * s.w;
        v.iter()
            .enumerate()
            .map(|(i, &xv)| {
                let c = (i / plane) % s.c;
                sc[c] * (xv - md[c]) / (vd[c] + e).sqrt() + hd[c]
            })
            .collect()
    };
    let nxe = central_diff(&xd, |v| dot(&rd, &eval_ref(v, &sd)));
    let nse = central_diff(&sd, |v| dot(&rd, &eval_ref(&xd, v)));
    err = err
        .max(max_relative_error(ge.input.data(), &nxe))
        .max(max_relative_error(&ge.scale, &nse));
    GradCheck { name: "batchnorm".into(), max_rel_error: err }
}

pub fn check_relu(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = Shape::new(2, 3, 4, 4);
    // keep clear of the kink at zero
    let vals: Vec<f32> = (0..s.numel())
        .map(|_| {
            let m = rng.random_range(0.05f32..2.0);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect();
    let x = Tensor::from_vec(s, vals).unwrap();
    let y = relu(&x);
    let r = random_vec(&mut rng, y.numel(), -1.0, 1.0);
    let rd = widen(&r);
    let g = relu_backward(&y, &Tensor::from_vec(s, r).unwrap());
    let n = central_diff(&widen(x.data()), |v| {
        v.iter().zip(&rd).map(|(x, r)| x.max(0.0) * r).sum()
    });
    GradCheck { name: "relu".into(), max_rel_error: max_relative_error(g.data(), &n) }
}

pub fn check_sigmoid(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = Shape::new(2, 3, 4, 4);
    let x = Tensor::from_vec(s, random_vec(&mut rng, s.numel(), -4.0, 4.0)).unwrap();
    let y = sigmoid(&x);
    let r = random_vec(&mut rng, y.numel(), -1.0, 1.0);
    let rd = widen(&r);
    let g = sigmoid_backward(&y, &Tensor::from_vec(s, r).unwrap());
    let n = central_diff(&widen(x.data()), |v| {
        v.iter().zip(&rd).map(|(x, r)| r / (1.0 + (-x).exp())).sum()
    });
    GradCheck { name: "sigmoid".into(), max_rel_error: max_relative_error(g.data(), &n) }
}

pub fn check_mse(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = Shape::new(2, 1, 3, 3);
    let p = Tensor::from_vec(s, random_vec(&mut rng, s.numel(), 0.0, 1.0)).unwrap();
    let t = Tensor::from_vec(s, random_vec(&mut rng, s.numel(), 0.0, 1.0)).unwrap();
    let out = mse_loss(&p, &t).unwrap();
    let td = widen(t.data());
    let n = central_diff(&widen(p.data()), |v| {
        v.iter().zip(&td).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / v.len() as f64
    });
    GradCheck { name: "mse_loss".into(), max_rel_error: max_relative_error(out.grad.data(), &n) }
}

pub fn check_l1(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = Shape::new(2, 1, 3, 3);
    let t = Tensor::from_vec(s, random_vec(&mut rng, s.numel(), 0.0, 1.0)).unwrap();
    // offsets keep every difference clear of the kink at zero
    let p: Vec<f32> = t
        .data()
        .iter()
        .map(|&v| {
            let d = rng.random_range(0.05f32..0.5);
            if rng.random_bool(0.5) { v + d } else { v - d }
        })
        .collect();
    let p = Tensor::from_vec(s, p).unwrap();
    let out = l1_loss(&p, &t).unwrap();
    let td = widen(t.data());
    let n = central_diff(&widen(p.data()), |v| {
        v.iter().zip(&td).map(|(a, b)| (a - b).abs()).sum::<f64>() / v.len() as f64
    });
    GradCheck { name: "l1_loss".into(), max_rel_error: max_relative_error(out.grad.data(), &n) }
}

pub fn check_cross_entropy(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = Shape::new(2, 5, 2, 3);
    let logits = Tensor::from_vec(s, random_vec(&mut rng, s.numel(), -2.0, 2.0)).unwrap();
    let classes: Vec<usize> = (0..s.n * s.plane()).map(|_| rng.random_range(0..s.c)).collect();
    let out = cross_entropy_loss(&logits, &classes).unwrap();
    let plane = s.plane();
    let n = central_diff(&widen(logits.data()), |v| {
        let mut total = 0.0;
        for b in 0..s.n {
            for p in 0..plane {
                let at = |c: usize| v[(b * s.c + c) * plane + p];
                let lse = (0..s.c).map(|c| at(c).exp()).sum::<f64>().ln();
                total += lse - at(classes[b * plane + p]);
            }
        }
        total / (s.n * plane) as f64
    });
    GradCheck { name: "cross_entropy_loss".into(), max_rel_error: max_relative_error(out.grad.data(), &n) }
}

/// Runs every check for each seed and keeps the worst error per op.
pub fn run_all(seeds: impl IntoIterator<Item = u64> + Clone) -> Vec<GradCheck> {
    let checks: [fn(u64) -> GradCheck; 8] = [
        check_conv,
        check_maxpool,
        check_batchnorm,
        check_relu,
        check_sigmoid,
        check_mse,
        check_l1,
        check_cross_entropy,
    ];
    checks
        .iter()
        .map(|check| {
            let mut worst: Option<GradCheck> = None;
            for seed in seeds.clone() {
                let c = check(seed);
                if worst.as_ref().is_none_or(|w| c.max_rel_error > w.max_rel_error || !c.max_rel_error.is_finite()) {
                    worst = Some(c);
                }
            }
            worst.expect("at least one seed")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_conv_matches_sum_of_ones() {
        let s = Shape::new(1, 1, 3, 3);
        let y = reference_conv(&[1.0; 9], s, &[1.0; 9], s, &[0.0], 1, 0);
        assert_eq!(y, vec![9.0]);
    }

    #[test]
    fn relative_error_of_equal_is_zero() {
        assert_eq!(max_relative_error(&[1.0, -2.0], &[1.0, -2.0]), 0.0);
    }
}
