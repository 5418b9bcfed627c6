use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Module, Result};
use crate::model::{param_group, ModelParams, ParamGroup};

/// Optimizer hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub lr_backbone: f64,
    pub lr_head: f64,
    pub weight_decay: f64,
    pub warmup_frac: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self { lr_backbone: 3e-4, lr_head: 3e-4, weight_decay: 0.01, warmup_frac: 0.1, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(Module::Trainer, msg));
        if !(self.lr_backbone >= 0.0 && self.lr_head >= 0.0) {
            return bad(format!("negative learning rate ({}, {})", self.lr_backbone, self.lr_head));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return bad(format!("warmup fraction {} outside [0, 1)", self.warmup_frac));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("betas must lie in [0, 1)".into());
        }
        if !(self.eps > 0.0 && self.weight_decay >= 0.0) {
            return bad("eps must be positive and weight decay non-negative".into());
        }
        Ok(())
    }
}

/// Learning rate for each parameter group at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub backbone: f64,
    pub head: f64,
}

impl GroupRates {
    pub fn of(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Backbone => self.backbone,
            ParamGroup::Head => self.head,
        }
    }
}

/// AdamW moments and schedule position.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub config: OptimConfig,
    pub total_steps: usize,
    /// Updates applied so far.
    pub step: usize,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl OptimState {
    pub fn new(params: &ModelParams, config: OptimConfig, total_steps: usize) -> Result<Self> {
        config.validate()?;
        if total_steps == 0 {
            return Err(Error::config(Module::Trainer, "total steps must be positive"));
        }
        let zeros = || params.iter().map(|(_, t)| vec![0.0f32; t.len()]).collect();
        Ok(Self { config, total_steps, step: 0, m: zeros(), v: zeros() })
    }

    pub fn warmup_steps(&self) -> usize {
        (self.config.warmup_frac * self.total_steps as f64).round() as usize
    }
}

/// Linear warmup over the first `warmup_frac` of steps, then cosine decay
/// to zero at `total_steps`.
pub fn lr_at(step: usize, state: &OptimState) -> Result<GroupRates> {
    let total = state.total_steps;
    if step > total {
        return Err(Error::contract(Module::Trainer, format!("step {step} beyond the schedule's {total} steps")));
    }
    let warm = state.warmup_steps();
    let factor = if step < warm {
        step as f64 / warm as f64
    } else {
        let progress = (step - warm) as f64 / (total - warm) as f64;
        0.5 * (1.0 + (PI * progress).cos())
    };
    Ok(GroupRates { backbone: state.config.lr_backbone * factor, head: state.config.lr_head * factor })
}

/// One AdamW update with bias correction and decoupled weight decay, at
/// the learning rate of the step being taken (`state.step + 1`).
///
/// `grads` follows the store order of `params`.
pub fn adamw_step(params: &mut ModelParams, grads: &[Vec<f32>], state: &mut OptimState) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(Error::contract(Module::Trainer, "optimizer state does not match the parameter set"));
    }
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for (i, name) in names.iter().enumerate() {
        let len = params.tensor_at_mut(i).len();
        match grads.get(i) {
            None => return Err(Error::contract(Module::Trainer, format!("missing gradient for `{name}`"))),
            Some(g) if g.len() != len => {
                return Err(Error::contract(
                    Module::Trainer,
                    format!("gradient for `{name}` has {} values, parameter has {len}", g.len()),
                ))
            }
            Some(g) if g.iter().any(|x| !x.is_finite()) => {
                return Err(Error::non_finite(Module::Trainer, format!("gradient for `{name}`")))
            }
            _ => {}
        }
    }

    let t = state.step + 1;
    let rates = lr_at(t, state)?;
    let c = &state.config;
    let (b1, b2) = (c.beta1, c.beta2);
    let bc1 = 1.0 - b1.powi(t as i32);
    let bc2 = 1.0 - b2.powi(t as i32);
    for (i, name) in names.iter().enumerate() {
        let lr = rates.of(param_group(name));
        let decay = (1.0 - lr * c.weight_decay) as f32;
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let p = params.tensor_at_mut(i).data_mut();
        for (k, &gk) in grads[i].iter().enumerate() {
            let g = gk as f64;
            let mk = b1 * m[k] as f64 + (1.0 - b1) * g;
            let vk = b2 * v[k] as f64 + (1.0 - b2) * g * g;
            m[k] = mk as f32;
            v[k] = vk as f32;
            let update = lr * (mk / bc1) / ((vk / bc2).sqrt() + c.eps);
            p[k] = p[k] * decay - update as f32;
        }
    }
    state.step = t;
    Ok(())
}
