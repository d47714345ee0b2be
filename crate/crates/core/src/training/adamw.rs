//! Adam with decoupled weight decay.

use crate::error::{Error, Result};
use crate::params::ParamSet;

#[derive(Clone, Copy, Debug)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay coefficient λ; applied as θ ← θ − lr·λ·θ alongside
    /// (not inside) the gradient term.
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Optimizer state: first/second moment accumulators mirroring the
/// parameter layout, plus the step counter driving bias correction.
pub struct AdamW {
    cfg: AdamWConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, params: &ParamSet) -> Self {
        let m = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        let v = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self { cfg, m, v, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update. Gradients must align with the parameter layout;
    /// frozen parameters are skipped. A non-finite gradient rejects the
    /// whole step before any parameter is touched.
    #[allow(clippy::needless_range_loop)]
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Vec<f64>]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Dimension(format!(
                "{} gradient blocks for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (p, g) in (0..params.len()).zip(grads) {
            if params.get(p).trainable && g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Evaluation(format!(
                    "non-finite gradient for {}; step rejected",
                    params.get(p).name
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.cfg.beta1.powi(t);
        let bias2 = 1.0 - self.cfg.beta2.powi(t);
        for idx in 0..params.len() {
            if !params.get(idx).trainable {
                continue;
            }
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            let theta = params.value_mut(idx).data_mut();
            for ((x, g), (mi, vi)) in theta
                .iter_mut()
                .zip(&grads[idx])
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = self.cfg.beta1 * *mi + (1.0 - self.cfg.beta1) * g;
                *vi = self.cfg.beta2 * *vi + (1.0 - self.cfg.beta2) * g * g;
                let m_hat = *mi / bias1;
                let v_hat = *vi / bias2;
                let prev = *x;
                *x = prev
                    - self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps)
                    - self.cfg.lr * self.cfg.weight_decay * prev;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tensor;

    fn single_param(value: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.push("theta", Tensor::scalar(value), true);
        ps
    }

    #[test]
    fn first_step_matches_hand_derivation() {
        // g = 1, λ = 0, eps ≈ 0: bias correction gives m̂ = v̂ = 1, so Δθ = -lr
        let cfg = AdamWConfig {
            lr: 0.01,
            eps: 1e-12,
            ..AdamWConfig::default()
        };
        let mut params = single_param(0.5);
        let mut opt = AdamW::new(cfg, &params);
        opt.step(&mut params, &[vec![1.0]]).unwrap();
        let got = params.get(0).value.data()[0];
        assert!((got - 0.49).abs() < 1e-9, "got {got}");
    }

    #[test]
    fn zero_gradient_fresh_state_no_change() {
        let mut params = single_param(0.7);
        let mut opt = AdamW::new(AdamWConfig::default(), &params);
        opt.step(&mut params, &[vec![0.0]]).unwrap();
        assert_eq!(params.get(0).value.data()[0], 0.7);
    }

    #[test]
    fn decoupled_decay_shrinks_by_factor() {
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.5,
            ..AdamWConfig::default()
        };
        let mut params = single_param(2.0);
        let mut opt = AdamW::new(cfg, &params);
        opt.step(&mut params, &[vec![0.0]]).unwrap();
        let got = params.get(0).value.data()[0];
        assert!((got - 2.0 * (1.0 - 0.1 * 0.5)).abs() < 1e-15, "got {got}");
    }

    #[test]
    fn zero_lr_step_is_identity() {
        let cfg = AdamWConfig {
            lr: 0.0,
            weight_decay: 1e-4,
            ..AdamWConfig::default()
        };
        let mut params = single_param(1.25);
        let before = params.get(0).value.data()[0].to_bits();
        let mut opt = AdamW::new(cfg, &params);
        opt.step(&mut params, &[vec![3.7]]).unwrap();
        assert_eq!(params.get(0).value.data()[0].to_bits(), before);
    }

    #[test]
    fn non_finite_gradient_rejected_without_mutation() {
        let mut params = single_param(1.0);
        let mut opt = AdamW::new(AdamWConfig::default(), &params);
        let err = opt.step(&mut params, &[vec![f64::NAN]]);
        assert!(matches!(err, Err(Error::Evaluation(_))));
        assert_eq!(params.get(0).value.data()[0], 1.0);
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn frozen_params_untouched() {
        let mut ps = ParamSet::new();
        ps.push("w", Tensor::scalar(1.0), true);
        ps.push("frozen", Tensor::scalar(5.0), false);
        let mut opt = AdamW::new(AdamWConfig::default(), &ps);
        opt.step(&mut ps, &[vec![1.0], vec![9.0]]).unwrap();
        assert_eq!(ps.get(1).value.data()[0], 5.0);
        assert!(ps.get(0).value.data()[0] < 1.0);
    }
}
