use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// 2x2 max pooling with stride 2. Trailing odd rows/columns are dropped.
///
/// Returns the pooled tensor and, for each output cell, the flat input index
/// of the winning element. Ties go to the first maximum in row-major order.
pub fn maxpool2(input: &Tensor) -> Result<(Tensor, Vec<u32>)> {
    let s = input.shape();
    if s.h < 2 {
        return Err(Error::TooSmall { op: "maxpool2", axis: "height", minimum: 2, actual: s.h });
    }
    if s.w < 2 {
        return Err(Error::TooSmall { op: "maxpool2", axis: "width", minimum: 2, actual: s.w });
    }
    let (oh, ow) = (s.h / 2, s.w / 2);
    let out_shape = Shape::new(s.n, s.c, oh, ow);
    let mut out = Vec::with_capacity(out_shape.numel());
    let mut argmax = Vec::with_capacity(out_shape.numel());
    let data = input.data();
    for nc in 0..s.n * s.c {
        let base = nc * s.plane();
        for oy in 0..oh {
            for ox in 0..ow {
                let top = base + 2 * oy * s.w + 2 * ox;
                let mut best = top;
                for idx in [top + 1, top + s.w, top + s.w + 1] {
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.push(data[best]);
                argmax.push(best as u32);
            }
        }
    }
    Ok((Tensor::from_vec(out_shape, out)?, argmax))
}

pub fn maxpool2_backward(input_shape: Shape, argmax: &[u32], grad_out: &Tensor) -> Result<Tensor> {
    if argmax.len() != grad_out.numel() {
        return Err(Error::Invalid(format!(
            "maxpool2 backward: {} routes for {} gradients",
            argmax.len(),
            grad_out.numel()
        )));
    }
    let mut grad = Tensor::zeros(input_shape);
    let g = grad.data_mut();
    for (&idx, &d) in argmax.iter().zip(grad_out.data()) {
        g[idx as usize] += d;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_max() {
        let x = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, _) = maxpool2(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
    }

    #[test]
    fn ties_route_to_top_left() {
        let x = Tensor::full(Shape::new(1, 1, 4, 4), 2.5);
        let (y, idx) = maxpool2(&x).unwrap();
        assert_eq!(y.data(), &[2.5; 4]);
        let g = maxpool2_backward(x.shape(), &idx, &Tensor::full(y.shape(), 1.0)).unwrap();
        let expect = [
            1.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, //
            1.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 0.0,
        ];
        assert_eq!(g.data(), &expect);
    }

    #[test]
    fn odd_extent_floors() {
        let x = Tensor::full(Shape::new(1, 2, 5, 7), 1.0);
        let (y, _) = maxpool2(&x).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 2, 2, 3));
    }

    #[test]
    fn rejects_tiny_input() {
        let x = Tensor::full(Shape::new(1, 1, 1, 4), 1.0);
        assert!(matches!(maxpool2(&x), Err(Error::TooSmall { axis: "height", .. })));
    }
}
