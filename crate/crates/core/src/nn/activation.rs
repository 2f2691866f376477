use crate::tensor::Tensor;

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.clear_grad();
    for v in out.data_mut() {
        if *v <= 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Gradient of ReLU given its forward output; the subgradient at zero is zero.
pub fn relu_backward(output: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (d, &y) in g.data_mut().iter_mut().zip(output.data()) {
        if y <= 0.0 {
            *d = 0.0;
        }
    }
    g
}

/// Largest f32 below one.
const BELOW_ONE: f32 = 1.0 - f32::EPSILON / 2.0;

/// Logistic function, kept strictly inside (0, 1) even where f32 would round
/// to an endpoint.
pub fn sigmoid_scalar(x: f32) -> f32 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(f32::MIN_POSITIVE, BELOW_ONE)
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.clear_grad();
    for v in out.data_mut() {
        *v = sigmoid_scalar(*v);
    }
    out
}

pub fn sigmoid_backward(output: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (d, &y) in g.data_mut().iter_mut().zip(output.data()) {
        *d *= y * (1.0 - y);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn known_values() {
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![-3.0, 0.0, 3.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 3.0]);
        assert_eq!(sigmoid(&x).data()[1], 0.5);
    }

    #[test]
    fn sigmoid_stays_open_interval() {
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![-200.0, 40.0]).unwrap();
        let y = sigmoid(&x);
        assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn relu_zero_subgradient() {
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![0.0, 1.0]).unwrap();
        let y = relu(&x);
        let g = relu_backward(&y, &Tensor::full(x.shape(), 1.0));
        assert_eq!(g.data(), &[0.0, 1.0]);
    }
}
