//! SGD with momentum, weight decay, and the inverse-decay schedule.
//!
//! The learning rate follows `η_t = η₀ · (1 + γ·p)^(−power)` with progress
//! `p = t / total_iterations ∈ [0, 1]`, and an adaptation factor
//! `a(p) = 2 / (1 + exp(−steepness·p)) − 1` ramps the adversarial signal
//! into the feature blocks from 0 to 1 as training progresses. Classifier
//! and discriminator parameters carry a learning-rate multiplier (10× by
//! default) relative to the feature blocks.

use crate::array::Array2;
use serde::{Deserialize, Serialize};

/// A trainable array with its momentum buffer and per-parameter multiplier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub value: Array2,
    pub velocity: Array2,
    #[serde(skip)]
    pub grad: Array2,
    pub lr_multiplier: f64,
}

impl Parameter {
    pub fn new(value: Array2, lr_multiplier: f64) -> Self {
        let (r, c) = value.shape();
        Parameter {
            value,
            velocity: Array2::zeros(r, c),
            grad: Array2::zeros(r, c),
            lr_multiplier,
        }
    }

    /// Zeroes the gradient accumulator in place.
    pub fn zero_grad(&mut self) {
        self.grad.fill_zero();
    }

    /// Restores the transient gradient buffer after deserialization.
    pub fn ensure_grad_buffer(&mut self) {
        if self.grad.shape() != self.value.shape() {
            let (r, c) = self.value.shape();
            self.grad = Array2::zeros(r, c);
        }
    }
}

/// Hyperparameters of the optimizer and its schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Base learning rate η₀ applied to the feature blocks.
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// γ in the inverse-decay schedule.
    pub inv_gamma: f64,
    /// Exponent in the inverse-decay schedule.
    pub inv_power: f64,
    /// Steepness of the adaptation-factor ramp.
    pub adapt_steepness: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            base_lr: 0.02,
            momentum: 0.9,
            weight_decay: 3e-4,
            inv_gamma: 10.0,
            inv_power: 0.75,
            adapt_steepness: 10.0,
        }
    }
}

impl OptimizerConfig {
    /// Training progress `t / total`, clamped to `[0, 1]`.
    pub fn progress(t: u64, total_iterations: u64) -> f64 {
        if total_iterations == 0 {
            return 1.0;
        }
        (t as f64 / total_iterations as f64).clamp(0.0, 1.0)
    }

    /// Inverse-decay learning rate at iteration `t` of `total_iterations`.
    pub fn lr_at(&self, t: u64, total_iterations: u64) -> f64 {
        let p = Self::progress(t, total_iterations);
        self.base_lr * (1.0 + self.inv_gamma * p).powf(-self.inv_power)
    }

    /// Adaptation factor `a(p) ∈ [0, 1)` ramping the adversarial signal.
    pub fn adaptation_factor(&self, t: u64, total_iterations: u64) -> f64 {
        let p = Self::progress(t, total_iterations);
        2.0 / (1.0 + (-self.adapt_steepness * p).exp()) - 1.0
    }
}

/// One SGD step over `params` at iteration `t`:
/// `v ← momentum·v + grad + weight_decay·w`, then
/// `w ← w − η_t·lr_multiplier·v`. Gradients are zeroed afterwards.
pub fn sgd_step(
    params: &mut [&mut Parameter],
    config: &OptimizerConfig,
    t: u64,
    total_iterations: u64,
) {
    let lr = config.lr_at(t, total_iterations);
    for p in params {
        let (rows, cols) = p.value.shape();
        debug_assert_eq!(p.grad.shape(), (rows, cols));
        let step = lr * p.lr_multiplier;
        let v = p.velocity.as_mut_slice();
        let g = p.grad.as_slice();
        let w = p.value.as_mut_slice();
        for i in 0..w.len() {
            v[i] = config.momentum * v[i] + g[i] + config.weight_decay * w[i];
            w[i] -= step * v[i];
        }
        p.grad.fill_zero();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints_match_closed_forms() {
        let cfg = OptimizerConfig::default();
        let total = 1000;
        assert_eq!(cfg.lr_at(0, total), cfg.base_lr);
        assert_eq!(cfg.adaptation_factor(0, total), 0.0);
        let end = cfg.base_lr * 11.0_f64.powf(-0.75);
        assert!((cfg.lr_at(1000, total) - end).abs() < 1e-15);
        // Past the horizon, progress clamps to 1.
        assert_eq!(cfg.lr_at(5000, total), cfg.lr_at(1000, total));
        let a_end = 2.0 / (1.0 + (-10.0_f64).exp()) - 1.0;
        assert!((cfg.adaptation_factor(1000, total) - a_end).abs() < 1e-15);
    }

    #[test]
    fn lr_is_monotonically_decreasing() {
        let cfg = OptimizerConfig::default();
        let mut last = f64::INFINITY;
        for t in 0..=100 {
            let lr = cfg.lr_at(t, 100);
            assert!(lr > 0.0 && lr <= last);
            last = lr;
        }
    }

    #[test]
    fn sgd_step_matches_hand_rolled_update() {
        let cfg = OptimizerConfig {
            base_lr: 0.1,
            momentum: 0.9,
            weight_decay: 0.01,
            ..OptimizerConfig::default()
        };
        let mut p = Parameter::new(Array2::from_vec(1, 1, vec![2.0]), 1.0);
        p.grad.set(0, 0, 0.5);
        sgd_step(&mut [&mut p], &cfg, 0, 100);
        // v = 0.9·0 + 0.5 + 0.01·2 = 0.52; w = 2 − 0.1·0.52 = 1.948
        assert!((p.value.get(0, 0) - 1.948).abs() < 1e-15);
        assert_eq!(p.grad.get(0, 0), 0.0);

        // Second step with zero grad still moves along the velocity.
        sgd_step(&mut [&mut p], &cfg, 1, 100);
        let v2 = 0.9 * 0.52 + 0.01 * 1.948;
        let lr2 = 0.1 * (1.0_f64 + 10.0 / 100.0).powf(-0.75);
        assert!((p.value.get(0, 0) - (1.948 - lr2 * v2)).abs() < 1e-12);
    }

    #[test]
    fn lr_multiplier_scales_the_step() {
        let cfg = OptimizerConfig {
            base_lr: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
            ..OptimizerConfig::default()
        };
        let mut slow = Parameter::new(Array2::from_vec(1, 1, vec![1.0]), 1.0);
        let mut fast = Parameter::new(Array2::from_vec(1, 1, vec![1.0]), 10.0);
        slow.grad.set(0, 0, 1.0);
        fast.grad.set(0, 0, 1.0);
        sgd_step(&mut [&mut slow, &mut fast], &cfg, 0, 10);
        let slow_step = 1.0 - slow.value.get(0, 0);
        let fast_step = 1.0 - fast.value.get(0, 0);
        assert!((fast_step / slow_step - 10.0).abs() < 1e-12);
    }
}
