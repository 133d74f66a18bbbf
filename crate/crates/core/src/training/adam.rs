use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global L2 norm ceiling; non-positive disables clipping.
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 1.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("non-finite gradient at parameter {index}")]
pub struct NonFiniteGradient {
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, n: usize) -> Self {
        Self {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Clips `grad` to the global norm ceiling, then applies one bias-corrected
    /// update. Returns the pre-clip norm.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<f64, NonFiniteGradient> {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(NonFiniteGradient { index });
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let c = &self.config;
        let scale = if c.clip_norm > 0.0 && norm > c.clip_norm { c.clip_norm / norm } else { 1.0 };
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i] * scale;
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
        }
        Ok(norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        for g in [0.5, -0.03, 0.9] {
            let mut adam = Adam::new(AdamConfig::default(), 1);
            let mut p = [2.0];
            adam.step(&mut p, &[g]).unwrap();
            // m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps)
            let expected = 1e-3 * g.abs() / (g.abs() + 1e-8);
            assert!(((2.0 - p[0]).abs() - expected).abs() < 1e-15);
            assert!(((2.0 - p[0]).abs() - 1e-3).abs() < 1e-6 * 1e-3);
            assert_eq!((2.0 - p[0]).signum(), g.signum());
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut adam = Adam::new(AdamConfig::default(), 3);
        let mut p = [1.0, -2.0, 3.0];
        for _ in 0..5 {
            adam.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, [1.0, -2.0, 3.0]);
    }

    #[test]
    fn clipping_scales_gradient() {
        let cfg = AdamConfig {
            beta1: 0.0,
            beta2: 0.0,
            eps: 0.0,
            lr: 1.0,
            ..AdamConfig::default()
        };
        // With both betas zero the update is sign(g); check the moments instead.
        let mut adam = Adam::new(cfg, 2);
        let mut p = [0.0, 0.0];
        let norm = adam.step(&mut p, &[6.0, 8.0]).unwrap();
        assert_eq!(norm, 10.0);
        assert!((adam.m[0] - 0.6).abs() < 1e-15 && (adam.m[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut adam = Adam::new(AdamConfig::default(), 2);
        let mut p = [0.0, 0.0];
        assert_eq!(adam.step(&mut p, &[1.0, f64::NAN]), Err(NonFiniteGradient { index: 1 }));
        assert_eq!(p, [0.0, 0.0]);
        assert_eq!(adam.steps(), 0);
    }
}
