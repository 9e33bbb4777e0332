use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adaptive moment estimation with bias correction and no weight decay.
///
/// Moment buffers are allocated on the first step to match the parameter
/// slices; later steps must pass slices of the same lengths in the same order.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Result<Self> {
        let c = &config;
        if !(c.learning_rate >= 0.0 && c.learning_rate.is_finite()) {
            return Err(Error::Validation(format!(
                "learning rate must be finite and non-negative, got {}",
                c.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&c.beta1) || !(0.0..1.0).contains(&c.beta2) {
            return Err(Error::Validation("moment decay rates must lie in [0, 1)".into()));
        }
        if c.epsilon.is_nan() || c.epsilon <= 0.0 {
            return Err(Error::Validation("epsilon must be positive".into()));
        }
        Ok(Adam {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) -> Result<()> {
        if params.len() != grads.len()
            || params.iter().zip(&grads).any(|(p, g)| p.len() != g.len())
        {
            return Err(Error::Shape("parameter and gradient layouts differ".into()));
        }
        if self.step == 0 {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len()
            || self.first.iter().zip(&params).any(|(m, p)| m.len() != p.len())
        {
            return Err(Error::Shape("parameter layout changed between steps".into()));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut opt = Adam::new(AdamConfig {
            learning_rate: 0.01,
            ..Default::default()
        })
        .unwrap();
        let mut p = vec![1.0, -2.0, 0.5];
        opt.step(vec![&mut p], vec![&[3.0, -0.1, 0.0]]).unwrap();
        assert!((p[0] - 0.99).abs() < 1e-8);
        assert!((p[1] + 1.99).abs() < 1e-6);
        assert_eq!(p[2], 0.5);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut opt = Adam::new(AdamConfig {
            learning_rate: 0.05,
            ..Default::default()
        })
        .unwrap();
        let mut x = vec![3.0, -4.0];
        for _ in 0..2000 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * (v - 1.0)).collect();
            opt.step(vec![&mut x], vec![&g]).unwrap();
        }
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-3), "{x:?}");
    }

    #[test]
    fn layout_change_is_rejected() {
        let mut opt = Adam::new(AdamConfig::default()).unwrap();
        let mut a = vec![0.0; 2];
        opt.step(vec![&mut a], vec![&[1.0, 1.0]]).unwrap();
        let mut b = vec![0.0; 3];
        assert!(opt.step(vec![&mut b], vec![&[1.0; 3]]).is_err());
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let bad = |c: AdamConfig| Adam::new(c).is_err();
        assert!(bad(AdamConfig { learning_rate: -1.0, ..Default::default() }));
        assert!(bad(AdamConfig { beta1: 1.0, ..Default::default() }));
        assert!(bad(AdamConfig { epsilon: 0.0, ..Default::default() }));
    }
}
