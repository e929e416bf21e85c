use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
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

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    /// Creates zeroed moment buffers shaped like `params`.
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        Self {
            config,
            step: 0,
            first: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Every parameter needs a gradient of its own size.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Option<&[f64]>]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(TensorError::InvalidArgument {
                op: "adam",
                reason: format!(
                    "{} parameters, {} gradients, {} moment buffers",
                    params.len(),
                    grads.len(),
                    self.first.len()
                ),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let g = g.ok_or(TensorError::MissingGrad { index: i })?;
            if g.len() != p.numel() || self.first[i].len() != p.numel() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam",
                    lhs: p.shape().to_vec(),
                    rhs: vec![g.len()],
                });
            }
        }

        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let g = grads[i].unwrap();
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = vec![Tensor::from_vec(vec![0.3, -1.2])];
        let mut adam = Adam::new(AdamConfig::default(), &params);
        for _ in 0..5 {
            adam.step(&mut params, &[Some(&[0.0, 0.0])]).unwrap();
        }
        assert_eq!(params[0].data(), &[0.3, -1.2]);
        assert_eq!(adam.steps(), 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2 after one bias-corrected step, so the
        // update is lr * g / (|g| + eps).
        let mut params = vec![Tensor::scalar(1.0)];
        let mut adam = Adam::new(AdamConfig::with_lr(0.1), &params);
        adam.step(&mut params, &[Some(&[1.0])]).unwrap();
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((params[0].data()[0] - expected).abs() < 1e-15);
        assert!((1.0 - params[0].data()[0] - 0.1).abs() < 1e-8);
    }

    #[test]
    fn missing_gradient_is_rejected() {
        let mut params = vec![Tensor::scalar(1.0), Tensor::scalar(2.0)];
        let mut adam = Adam::new(AdamConfig::default(), &params);
        let err = adam.step(&mut params, &[Some(&[1.0]), None]).unwrap_err();
        assert_eq!(err, TensorError::MissingGrad { index: 1 });
        assert_eq!(adam.steps(), 0);
    }
}
