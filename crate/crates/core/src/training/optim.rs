use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub scheduler_factor: f64,
    pub scheduler_period_epochs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-4,
            scheduler_factor: 0.6,
            scheduler_period_epochs: 3,
            epochs: 50,
            batch_size: 16,
            weight_decay: 0.01,
            seed: 0,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            grad_clip: Some(1.0),
        }
    }
}

impl TrainConfig {
    /// Defaults with batch size 16 for spatial and 32 for sequence models.
    pub fn for_spatial(spatial: bool) -> Self {
        Self {
            batch_size: if spatial { 16 } else { 32 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::config(format!(
                "lr0 must be positive, got {}",
                self.lr0
            )));
        }
        if !(self.scheduler_factor > 0.0 && self.scheduler_factor <= 1.0) {
            return Err(Error::config(format!(
                "scheduler_factor must lie in (0, 1], got {}",
                self.scheduler_factor
            )));
        }
        if self.scheduler_period_epochs == 0 || self.batch_size == 0 {
            return Err(Error::config(
                "scheduler period and batch size must be positive",
            ));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2))
            || self.adam_eps.is_nan()
            || self.adam_eps <= 0.0
        {
            return Err(Error::config(
                "Adam betas must lie in [0, 1) and eps must be positive",
            ));
        }
        if self.weight_decay < 0.0 || self.grad_clip.is_some_and(|c| c.is_nan() || c <= 0.0) {
            return Err(Error::config("weight decay must be >= 0 and grad clip > 0"));
        }
        Ok(())
    }
}

/// `lr0` reduced by `scheduler_factor` once every `scheduler_period_epochs`.
/// The factor is applied by repeated multiplication, one step per period.
pub fn scheduler_lr(epoch: usize, cfg: &TrainConfig) -> f64 {
    let steps = epoch / cfg.scheduler_period_epochs.max(1);
    (0..steps).fold(cfg.lr0, |lr, _| lr * cfg.scheduler_factor)
}

/// First and second moments, one tensor per parameter in name order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        Self {
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One decoupled-weight-decay Adam step:
/// `θ ← θ − lr·m̂/(√v̂+ε) − lr·wd·θ`.
pub fn adamw_step(
    params: &mut ParamStore,
    grads: &[Tensor],
    state: &mut AdamState,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len()
    {
        return Err(Error::contract(format!(
            "adamw_step: {} parameters, {} gradients, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (((_, p), g), m) in params.iter_mut().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::Shape {
                op: "adamw_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
    }
    state.t += 1;
    let (b1, b2) = cfg.adam_betas;
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    let wd = cfg.weight_decay;
    for ((((_, p), g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for (((theta, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *theta = *theta - lr * m_hat / (v_hat.sqrt() + cfg.adam_eps) - lr * wd * *theta;
        }
    }
    Ok(())
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}
