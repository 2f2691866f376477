use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Scalar loss together with its gradient w.r.t. the prediction.
#[derive(Debug)]
pub struct LossOutput {
    pub value: f64,
    pub grad: Tensor,
}

/// Mean squared error over every element.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<LossOutput> {
    if pred.shape() != target.shape() {
        return Err(Error::Invalid(format!(
            "mse_loss: prediction {} and target {} differ",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.numel().max(1) as f64;
    let mut sum = 0.0f64;
    let mut grad = Tensor::zeros(pred.shape());
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p as f64 - t as f64;
        sum += d * d;
        *g = (2.0 * d / n) as f32;
    }
    let value = sum / n;
    if !value.is_finite() {
        return Err(Error::NonFinite("mse_loss"));
    }
    Ok(LossOutput { value, grad })
}

/// Mean L1 distance over every element. The subgradient at zero is zero.
pub fn l1_loss(pred: &Tensor, target: &Tensor) -> Result<LossOutput> {
    if pred.shape() != target.shape() {
        return Err(Error::Invalid(format!(
            "l1_loss: prediction {} and target {} differ",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.numel().max(1) as f64;
    let mut sum = 0.0f64;
    let mut grad = Tensor::zeros(pred.shape());
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p as f64 - t as f64;
        sum += d.abs();
        *g = if d > 0.0 {
            (1.0 / n) as f32
        } else if d < 0.0 {
            (-1.0 / n) as f32
        } else {
            0.0
        };
    }
    Ok(LossOutput { value: sum / n, grad })
}

/// Cross-entropy with a log-softmax over the channel axis, averaged over every
/// output cell. `classes` holds one index per `(n, y, x)` cell in row-major order.
pub fn cross_entropy_loss(logits: &Tensor, classes: &[usize]) -> Result<LossOutput> {
    let s = logits.shape();
    let cells = s.n * s.plane();
    if classes.len() != cells {
        return Err(Error::Dimension {
            op: "cross_entropy_loss",
            axis: "cell",
            expected: cells,
            actual: classes.len(),
        });
    }
    if let Some(&bad) = classes.iter().find(|&&c| c >= s.c) {
        return Err(Error::ClassIndex { index: bad, classes: s.c });
    }
    let plane = s.plane();
    let mut grad = Tensor::zeros(s);
    let mut total = 0.0f64;
    let norm = cells.max(1) as f64;
    let data = logits.data();
    let mut probs = vec![0.0f64; s.c];
    for n in 0..s.n {
        for p in 0..plane {
            let at = |c: usize| (n * s.c + c) * plane + p;
            let max = (0..s.c).map(|c| data[at(c)] as f64).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (c, pr) in probs.iter_mut().enumerate() {
                *pr = (data[at(c)] as f64 - max).exp();
                z += *pr;
            }
            let target = classes[n * plane + p];
            total -= data[at(target)] as f64 - max - z.ln();
            for (c, pr) in probs.iter().enumerate() {
                let indicator = if c == target { 1.0 } else { 0.0 };
                grad.data_mut()[at(c)] = ((pr / z - indicator) / norm) as f32;
            }
        }
    }
    let value = total / norm;
    if !value.is_finite() {
        return Err(Error::NonFinite("cross_entropy_loss"));
    }
    Ok(LossOutput { value, grad })
}
