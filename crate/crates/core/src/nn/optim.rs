//! Adam with bias correction and a linear learning-rate ramp.

use crate::error::{Error, Result};
use crate::nn::{ModelParams, Real};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Moment buffers congruent to a parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        Self::with_hyperparameters(params, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)
    }

    pub fn with_hyperparameters(params: &ModelParams<T>, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || params.tensors.iter().map(|t| vec![T::zero(); t.len()]).collect();
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// Restore a saved state.
    pub fn from_parts(beta1: f64, beta2: f64, eps: f64, step: u64, first: Vec<Vec<T>>, second: Vec<Vec<T>>) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            step,
            first,
            second,
        }
    }

    pub fn congruent_with(&self, params: &ModelParams<T>) -> bool {
        self.first.len() == params.tensors.len()
            && self.second.len() == params.tensors.len()
            && params
                .tensors
                .iter()
                .zip(self.first.iter().zip(&self.second))
                .all(|(t, (m, v))| m.len() == t.len() && v.len() == t.len())
    }

    /// Advance the step counter. Every [`update_slice`](Self::update_slice)
    /// until the next call belongs to the same step.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Update `param` in place; `offset` locates it within parameter `slot`.
    pub fn update_slice(&mut self, slot: usize, offset: usize, param: &mut [T], grad: &[T], lr: f64) -> Result<()> {
        if param.len() != grad.len() {
            return Err(Error::shape("adam", param.len(), grad.len()));
        }
        if let Some(bad) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("gradient of parameter {slot} at element {}", offset + bad),
            });
        }
        let end = offset + param.len();
        let (m, v) = match (self.first.get_mut(slot), self.second.get_mut(slot)) {
            (Some(m), Some(v)) if v.len() >= end && m.len() >= end => (&mut m[offset..end], &mut v[offset..end]),
            _ => return Err(Error::shape("adam slot", slot, param.len())),
        };
        let b1 = T::from_f64_lossy(self.beta1);
        let b2 = T::from_f64_lossy(self.beta2);
        let one_b1 = T::from_f64_lossy(1.0 - self.beta1);
        let one_b2 = T::from_f64_lossy(1.0 - self.beta2);
        let eps = T::from_f64_lossy(self.eps);
        let t = self.step.min(i32::MAX as u64) as i32;
        let step_size = T::from_f64_lossy(lr / (1.0 - self.beta1.powi(t)));
        let bias2_sqrt = T::from_f64_lossy((1.0 - self.beta2.powi(t)).sqrt());
        for (((p, &g), mi), vi) in param.iter_mut().zip(grad).zip(m).zip(v) {
            *mi = b1 * *mi + one_b1 * g;
            *vi = b2 * *vi + one_b2 * g * g;
            let denom = vi.sqrt() / bias2_sqrt + eps;
            *p = *p - step_size * (*mi / denom);
        }
        Ok(())
    }
}

/// One Adam step over a full gradient set. Gradients are checked for
/// finiteness before any parameter changes.
pub fn adam_step<T: Real>(params: &mut ModelParams<T>, grads: &ModelParams<T>, state: &mut AdamState<T>, lr: f64) -> Result<()> {
    if !state.congruent_with(params) || grads.tensors.len() != params.tensors.len() {
        return Err(Error::shape("adam", params.tensors.len(), grads.tensors.len()));
    }
    for (slot, (p, g)) in params.tensors.iter().zip(&grads.tensors).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::shape("adam gradient", p.shape(), g.shape()));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite {
                context: format!("gradient of parameter {slot}"),
            });
        }
    }
    state.begin_step();
    for (slot, (p, g)) in params.tensors.iter_mut().zip(&grads.tensors).enumerate() {
        state.update_slice(slot, 0, p.data_mut(), g.data(), lr)?;
    }
    Ok(())
}

/// Unit in which the learning-rate schedule advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleUnit {
    Epoch,
    Batch,
}

impl ScheduleUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleUnit::Epoch => "epoch",
            ScheduleUnit::Batch => "batch",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "epoch" => Ok(ScheduleUnit::Epoch),
            "batch" => Ok(ScheduleUnit::Batch),
            other => Err(Error::Config(format!("unknown schedule unit {other:?}"))),
        }
    }
}

/// Multiplier ramping linearly from `start_factor` to `end_factor` over
/// `total_iters` steps, then held at `end_factor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSchedule {
    pub start_factor: f64,
    pub end_factor: f64,
    pub total_iters: u64,
    pub unit: ScheduleUnit,
}

impl Default for LinearSchedule {
    fn default() -> Self {
        Self {
            start_factor: 1.0,
            end_factor: 0.005,
            total_iters: 300,
            unit: ScheduleUnit::Epoch,
        }
    }
}

impl LinearSchedule {
    pub fn factor(&self, step: u64) -> f64 {
        if step >= self.total_iters {
            return self.end_factor;
        }
        let frac = step as f64 / self.total_iters as f64;
        self.start_factor + (self.end_factor - self.start_factor) * frac
    }
}

/// The default ramp: 1.0 → 0.005 over 300 steps.
pub fn lr_factor(step: u64) -> f64 {
    LinearSchedule::default().factor(step)
}
