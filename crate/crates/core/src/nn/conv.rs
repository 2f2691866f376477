//! 2-D cross-correlation with zero padding, lowered to GEMM through im2col.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Geometry of one convolution call.
#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    in_c: usize,
    h: usize,
    w: usize,
    out_c: usize,
    k: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeom {
    fn patch_len(&self) -> usize {
        self.in_c * self.k * self.k
    }

    fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }

    /// A 1x1, stride-1, unpadded conv reads its input directly as the column matrix.
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Output extent of a convolution along one axis, or `None` if it would be empty.
pub fn conv_out_len(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

fn geometry(input: Shape, weight: Shape, bias: Shape, stride: usize, pad: usize) -> Result<ConvGeom> {
    if weight.h != weight.w {
        return Err(Error::Dimension {
            op: "conv2d",
            axis: "kernel width",
            expected: weight.h,
            actual: weight.w,
        });
    }
    if input.c != weight.c {
        return Err(Error::Dimension {
            op: "conv2d",
            axis: "channel",
            expected: weight.c,
            actual: input.c,
        });
    }
    if bias.numel() != weight.n {
        return Err(Error::Dimension {
            op: "conv2d",
            axis: "bias",
            expected: weight.n,
            actual: bias.numel(),
        });
    }
    if stride == 0 {
        return Err(Error::range("stride", "must be positive"));
    }
    let k = weight.h;
    let out_h = conv_out_len(input.h, k, stride, pad).ok_or(Error::TooSmall {
        op: "conv2d",
        axis: "height",
        minimum: k.saturating_sub(2 * pad),
        actual: input.h,
    })?;
    let out_w = conv_out_len(input.w, k, stride, pad).ok_or(Error::TooSmall {
        op: "conv2d",
        axis: "width",
        minimum: k.saturating_sub(2 * pad),
        actual: input.w,
    })?;
    Ok(ConvGeom {
        in_c: input.c,
        h: input.h,
        w: input.w,
        out_c: weight.n,
        k,
        stride,
        pad,
        out_h,
        out_w,
    })
}

fn im2col(g: &ConvGeom, src: &[f32], cols: &mut [f32]) {
    let plane = g.out_plane();
    for c in 0..g.in_c {
        let channel = &src[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src_row = &channel[iy as usize * g.w..(iy as usize + 1) * g.w];
                    if g.stride == 1 && g.pad == 0 {
                        line.copy_from_slice(&src_row[kj..kj + g.out_w]);
                        continue;
                    }
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.w as isize {
                            0.0
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(g: &ConvGeom, cols: &[f32], dst: &mut [f32]) {
    let plane = g.out_plane();
    for c in 0..g.in_c {
        let channel = &mut dst[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst_row = &mut channel[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let line = &src[oy * g.out_w..(oy + 1) * g.out_w];
                    if g.stride == 1 && g.pad == 0 {
                        for (d, s) in dst_row[kj..kj + g.out_w].iter_mut().zip(line) {
                            *d += s;
                        }
                        continue;
                    }
                    for (ox, s) in line.iter().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst_row[ix as usize] += s;
                        }
                    }
                }
            }
        }
    }
}

/// `c[m x n] = alpha * a[m x k] * b[k x n] + beta * c` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
) {
    assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Forward convolution.
///
/// `weight` is `(out_c, in_c, k, k)`, `bias` holds `out_c` values in any shape.
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let g = geometry(input.shape(), weight.shape(), bias.shape(), stride, pad)?;
    let n = input.shape().n;
    let mut out = Tensor::zeros(Shape::new(n, g.out_c, g.out_h, g.out_w));
    let plane = g.out_plane();
    let kk = g.patch_len();
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![0.0; kk * plane] };
    for b in 0..n {
        let src = input.item(b);
        let dst = out.item_mut(b);
        for (o, chunk) in dst.chunks_mut(plane).enumerate() {
            chunk.fill(bias.data()[o]);
        }
        let col: &[f32] = if g.is_pointwise() {
            src
        } else {
            im2col(&g, src, &mut cols);
            &cols
        };
        gemm(g.out_c, kk, plane, weight.data(), (kk, 1), col, (plane, 1), 1.0, dst);
    }
    Ok(out)
}

/// Gradients produced by [`conv2d_backward`].
#[derive(Debug)]
pub struct ConvGrads {
    pub input: Tensor,
    /// `None` when weight gradients were not requested.
    pub weight: Option<Vec<f32>>,
    pub bias: Option<Vec<f32>>,
}

/// Backward pass of [`conv2d`].
///
/// Weight and bias gradients are skipped when `param_grads` is false, which is
/// the frozen-network case.
pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
    param_grads: bool,
) -> Result<ConvGrads> {
    let out_c = weight.shape().n;
    let g = geometry(
        input.shape(),
        weight.shape(),
        Shape::new(1, out_c, 1, 1),
        stride,
        pad,
    )?;
    let expect = Shape::new(input.shape().n, g.out_c, g.out_h, g.out_w);
    if grad_out.shape() != expect {
        return Err(Error::Invalid(format!(
            "conv2d backward: gradient shape {} does not match output {}",
            grad_out.shape(),
            expect
        )));
    }
    let plane = g.out_plane();
    let kk = g.patch_len();
    let mut grad_in = Tensor::zeros(input.shape());
    let mut grad_w = param_grads.then(|| vec![0.0f32; weight.numel()]);
    let mut grad_b = param_grads.then(|| vec![0.0f32; out_c]);
    let mut cols = vec![0.0; kk * plane];
    let mut dcols = vec![0.0; kk * plane];
    for b in 0..input.shape().n {
        let dy = grad_out.item(b);
        if let (Some(gw), Some(gb)) = (grad_w.as_mut(), grad_b.as_mut()) {
            let col: &[f32] = if g.is_pointwise() {
                input.item(b)
            } else {
                im2col(&g, input.item(b), &mut cols);
                &cols
            };
            // dW += dY * col^T
            gemm(out_c, plane, kk, dy, (plane, 1), col, (1, plane), 1.0, gw);
            for (o, chunk) in dy.chunks(plane).enumerate() {
                gb[o] += chunk.iter().map(|&v| v as f64).sum::<f64>() as f32;
            }
        }
        if g.is_pointwise() {
            // dX = W^T * dY
            gemm(kk, out_c, plane, weight.data(), (1, kk), dy, (plane, 1), 0.0, grad_in.item_mut(b));
        } else {
            gemm(kk, out_c, plane, weight.data(), (1, kk), dy, (plane, 1), 0.0, &mut dcols);
            col2im(&g, &dcols, grad_in.item_mut(b));
        }
    }
    Ok(ConvGrads {
        input: grad_in,
        weight: grad_w,
        bias: grad_b,
    })
}
