use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::matrix::Matrix;
use crate::params::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one [`ParamSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros = || {
            params
                .values()
                .iter()
                .map(|p| Matrix::zeros(p.rows(), p.cols()))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn first_moment(&self) -> &[Matrix] {
        &self.m
    }

    pub fn second_moment(&self) -> &[Matrix] {
        &self.v
    }

    /// One bias-corrected Adam step. A non-finite gradient aborts the step
    /// before anything is modified.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Matrix]) -> Result<()> {
        if self.config.lr <= 0.0 {
            return Err(TensorError::Invalid {
                op: "adam_step",
                detail: format!("learning rate {} must be positive", self.config.lr),
            });
        }
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(TensorError::Invalid {
                op: "adam_step",
                detail: format!(
                    "{} gradients and {} moment slots for {} parameters",
                    grads.len(),
                    self.m.len(),
                    params.len()
                ),
            });
        }
        for (i, (p, g)) in params.values().iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(TensorError::Shape {
                    op: "adam_step",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
            if !g.all_finite() {
                return Err(TensorError::Invalid {
                    op: "adam_step",
                    detail: format!("non-finite gradient for {}", params.name(crate::ParamId(i))),
                });
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, g), (m, v)) in params
            .values_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let it = p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice().iter_mut().zip(v.as_mut_slice()));
            for ((w, &gv), (mv, vv)) in it {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
