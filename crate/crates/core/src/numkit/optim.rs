use serde::{Deserialize, Serialize};

use super::{Matrix, NumError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    /// `param ← param − η·grad`
    PlainGradient,
    /// Bias-corrected first/second moment estimates (Adam).
    AdaptiveMoment,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::AdaptiveMoment,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn plain(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::PlainGradient,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn adaptive(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug)]
struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
    steps: i32,
}

/// Optimizer with moment state for a fixed set of parameter slots.
///
/// Each parameter tensor is addressed by a slot index; the slot's moment
/// buffers are created lazily on first use and must keep a constant size.
#[derive(Clone, Debug)]
pub struct Optimizer {
    config: OptimizerConfig,
    slots: Vec<Option<Moments>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            slots: Vec::new(),
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn step(&mut self, slot: usize, param: &mut Matrix, grad: &Matrix) -> Result<(), NumError> {
        if param.shape() != grad.shape() {
            return Err(NumError::Shape {
                op: "optimizer_step",
                left: param.shape(),
                right: grad.shape(),
            });
        }
        self.step_slice(slot, param.as_mut_slice(), grad.as_slice())
    }

    /// Same as [`Optimizer::step`] over flat buffers.
    pub fn step_slice(&mut self, slot: usize, param: &mut [f64], grad: &[f64]) -> Result<(), NumError> {
        if param.len() != grad.len() {
            return Err(NumError::Shape {
                op: "optimizer_step",
                left: (param.len(), 1),
                right: (grad.len(), 1),
            });
        }
        let lr = self.config.learning_rate;
        match self.config.kind {
            OptimizerKind::PlainGradient => {
                for (p, g) in param.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::AdaptiveMoment => {
                if self.slots.len() <= slot {
                    self.slots.resize(slot + 1, None);
                }
                let len = grad.len();
                let m = self.slots[slot].get_or_insert_with(|| Moments {
                    first: vec![0.0; len],
                    second: vec![0.0; len],
                    steps: 0,
                });
                if m.first.len() != len {
                    return Err(NumError::Shape {
                        op: "optimizer_step (slot reused with new shape)",
                        left: (m.first.len(), 1),
                        right: (len, 1),
                    });
                }
                let OptimizerConfig { beta1, beta2, eps, .. } = self.config;
                m.steps += 1;
                let c1 = 1.0 - beta1.powi(m.steps);
                let c2 = 1.0 - beta2.powi(m.steps);
                for (((p, &g), m1), m2) in param
                    .iter_mut()
                    .zip(grad)
                    .zip(m.first.iter_mut())
                    .zip(m.second.iter_mut())
                {
                    *m1 = beta1 * *m1 + (1.0 - beta1) * g;
                    *m2 = beta2 * *m2 + (1.0 - beta2) * g * g;
                    let m_hat = *m1 / c1;
                    let v_hat = *m2 / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

/// One update applied to a copy of `param`; convenience for stateless use.
pub fn optimizer_step(opt: &mut Optimizer, param: &Matrix, grad: &Matrix) -> Result<Matrix, NumError> {
    let mut out = param.clone();
    opt.step(0, &mut out, grad)?;
    Ok(out)
}
