use serde::{Deserialize, Serialize};

use super::param::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd { momentum: f32 },
    Adam { beta1: f32, beta2: f32, eps: f32 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    fn buffers(&self) -> usize {
        match self {
            OptimizerKind::Sgd { momentum } if *momentum == 0.0 => 0,
            OptimizerKind::Sgd { .. } => 1,
            OptimizerKind::Adam { .. } => 2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub weight_decay: f32,
    /// Completed update count; drives Adam's bias correction.
    pub steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer { kind, weight_decay: 0.0, steps: 0 }
    }

    /// Updates every trainable parameter in place, then clears the gradients.
    ///
    /// Fails before touching anything if a trainable parameter has no gradient.
    pub fn step(&mut self, params: &mut ParamStore, lr: f32) -> Result<()> {
        if let Some(p) = params.iter().find(|p| p.value.requires_grad() && p.value.grad().is_none()) {
            return Err(Error::MissingGradient(p.name.clone()));
        }
        self.steps += 1;
        let t = self.steps as i32;
        let wd = self.weight_decay;
        for p in params.iter_mut() {
            if !p.value.requires_grad() {
                continue;
            }
            let n = p.value.numel();
            let buffers = self.kind.buffers();
            if p.state.len() != buffers || p.state.iter().any(|b| b.len() != n) {
                p.state = vec![vec![0.0; n]; buffers];
            }
            let grad = p.value.grad().map(<[f32]>::to_vec).unwrap_or_default();
            let state = &mut p.state;
            let value = p.value.data_mut();
            match self.kind {
                OptimizerKind::Sgd { momentum } => {
                    for i in 0..n {
                        let mut g = grad[i] + wd * value[i];
                        if momentum != 0.0 {
                            let v = &mut state[0][i];
                            *v = momentum * *v + g;
                            g = *v;
                        }
                        value[i] -= lr * g;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - (beta1 as f64).powi(t);
                    let c2 = 1.0 - (beta2 as f64).powi(t);
                    let (m_buf, rest) = state.split_at_mut(1);
                    let (m, v) = (&mut m_buf[0], &mut rest[0]);
                    for i in 0..n {
                        let g = grad[i] + wd * value[i];
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                        let mhat = m[i] as f64 / c1;
                        let vhat = v[i] as f64 / c2;
                        value[i] -= (lr as f64 * mhat / (vhat.sqrt() + eps as f64)) as f32;
                    }
                }
            }
            p.value.clear_grad();
        }
        Ok(())
    }
}
