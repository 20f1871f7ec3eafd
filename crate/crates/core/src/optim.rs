//! AdamW with decoupled weight decay, and a cosine-annealed learning rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Moment estimates for every registered parameter, in registration order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub step: u64,
    pub first_moment: Vec<Vec<f32>>,
    pub second_moment: Vec<Vec<f32>>,
}

impl OptimizerState {
    /// Zeroed moments shaped like `params`.
    pub fn new<'a>(config: AdamWConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let sizes: Vec<usize> = params.into_iter().map(Tensor::len).collect();
        Self {
            config,
            step: 0,
            first_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.first_moment.len()
    }
}

/// One AdamW update over `params`. Parameters whose `requires_grad` is false
/// are skipped (frozen); every other parameter must carry a gradient.
/// Gradients are left in place for the caller to zero.
pub fn adamw_step(params: &mut [&mut Tensor], state: &mut OptimizerState, lr: f64) -> Result<()> {
    if params.len() != state.num_params() {
        return Err(Error::InvalidArgument(format!(
            "optimizer tracks {} parameters, got {}",
            state.num_params(),
            params.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        if p.requires_grad && p.grad.is_none() {
            return Err(Error::Gradient(format!("parameter {i} has no gradient")));
        }
        if p.len() != state.first_moment[i].len() {
            return Err(Error::Shape(format!(
                "parameter {i} has {} elements, optimizer moments have {}",
                p.len(),
                state.first_moment[i].len()
            )));
        }
    }

    state.step += 1;
    let cfg = state.config;
    let t = state.step as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    let decay = (1.0 - lr * cfg.weight_decay) as f32;
    let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
    let step_size = (lr / bias1) as f32;
    let bias2_sqrt = bias2.sqrt() as f32;
    let eps = cfg.epsilon as f32;

    for (i, p) in params.iter_mut().enumerate() {
        if !p.requires_grad {
            continue;
        }
        let grad = p.grad.take().expect("checked above");
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        for (((w, &g), m), v) in p.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
            *w *= decay;
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let denom = v.sqrt() / bias2_sqrt + eps;
            *w -= step_size * *m / denom;
        }
        p.grad = Some(grad);
    }
    Ok(())
}

/// Cosine annealing from `base_lr` at epoch 0 to `min_lr` at `total_epochs`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub min_lr: f64,
    pub total_epochs: u32,
}

impl LrSchedule {
    pub fn new(base_lr: f64, min_lr: f64, total_epochs: u32) -> Result<Self> {
        if !(0.0 <= min_lr && min_lr <= base_lr) || total_epochs == 0 {
            return Err(Error::InvalidArgument(format!(
                "schedule needs 0 <= min_lr <= base_lr and total_epochs >= 1 \
                 (got min_lr={min_lr}, base_lr={base_lr}, total_epochs={total_epochs})"
            )));
        }
        Ok(Self {
            base_lr,
            min_lr,
            total_epochs,
        })
    }

    pub fn lr_at(&self, epoch: u32) -> Result<f64> {
        if epoch > self.total_epochs {
            return Err(Error::InvalidArgument(format!(
                "epoch {epoch} outside 0..={}",
                self.total_epochs
            )));
        }
        let phase = std::f64::consts::PI * f64::from(epoch) / f64::from(self.total_epochs);
        Ok(self.min_lr + 0.5 * (self.base_lr - self.min_lr) * (1.0 + phase.cos()))
    }
}
