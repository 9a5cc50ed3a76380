use serde::{Deserialize, Serialize};

use super::{Grads, ParamSet, Tensor};
use crate::error::Result;

/// Global gradient-norm ceiling applied before every optimizer step.
pub const DEFAULT_CLIP_NORM: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
    Adadelta {
        lr: f64,
        rho: f64,
        eps: f64,
    },
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        Self::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn adadelta(lr: f64) -> Self {
        Self::Adadelta {
            lr,
            rho: 0.95,
            eps: 1e-6,
        }
    }

    pub fn with_lr(self, new_lr: f64) -> Self {
        match self {
            Self::Adam {
                beta1, beta2, eps, ..
            } => Self::Adam {
                lr: new_lr,
                beta1,
                beta2,
                eps,
            },
            Self::Adadelta { rho, eps, .. } => Self::Adadelta {
                lr: new_lr,
                rho,
                eps,
            },
        }
    }

    pub fn build(self, params: &ParamSet) -> Optimizer {
        let zeros = || -> Vec<Tensor> {
            params
                .iter()
                .map(|(_, p)| Tensor::zeros(p.value.rows(), p.value.cols()))
                .collect()
        };
        Optimizer {
            config: self,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }
}

/// Optimizer state: Adam keeps first/second moments, ADADELTA keeps running
/// averages of squared gradients and squared updates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Optimizer {
    config: OptimizerConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Optimizer {
    pub fn config(&self) -> OptimizerConfig {
        self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Checks `grads` for non-finite entries, then applies one update.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Grads) -> Result<()> {
        grads.check_finite(params)?;
        self.step += 1;
        let ids: Vec<_> = params.iter().map(|(id, _)| id).collect();
        match self.config {
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for id in ids {
                    let g = grads.get(id).data();
                    let m = self.first[id.0].data_mut();
                    let v = self.second[id.0].data_mut();
                    let w = params.value_mut(id).data_mut();
                    for k in 0..g.len() {
                        m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                        v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                        let m_hat = m[k] / c1;
                        let v_hat = v[k] / c2;
                        w[k] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
            OptimizerConfig::Adadelta { lr, rho, eps } => {
                for id in ids {
                    let g = grads.get(id).data();
                    let acc_g = self.first[id.0].data_mut();
                    let acc_dx = self.second[id.0].data_mut();
                    let w = params.value_mut(id).data_mut();
                    for k in 0..g.len() {
                        acc_g[k] = rho * acc_g[k] + (1.0 - rho) * g[k] * g[k];
                        let dx = g[k] * (acc_dx[k] + eps).sqrt() / (acc_g[k] + eps).sqrt();
                        acc_dx[k] = rho * acc_dx[k] + (1.0 - rho) * dx * dx;
                        w[k] -= lr * dx;
                    }
                }
            }
        }
        Ok(())
    }
}
