use super::{ParamSet, Result, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients and clears them.
    ///
    /// Every parameter must carry a gradient; a missing one means the
    /// forward pass never touched it, which is a wiring bug upstream.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(TensorError::Contract(format!(
                "optimizer tracks {} tensors, parameter set has {}",
                self.first.len(),
                params.len()
            )));
        }
        for id in params.ids() {
            let t = params.get(id);
            if t.grad().is_none() {
                return Err(TensorError::Contract(format!(
                    "parameter {} has no gradient",
                    params.name(id)
                )));
            }
            if t.len() != self.first[id.index()].len() {
                return Err(TensorError::Shape {
                    op: "adam",
                    lhs: t.shape().to_vec(),
                    rhs: vec![self.first[id.index()].len()],
                });
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            eps,
        } = self.config;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);

        for ((t, m), v) in params
            .tensors_mut()
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            let g = t.take_grad().expect("checked above");
            for (((p, g), m), v) in t.data_mut().iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            super::check_finite(t.data(), "adam")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar_set(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::vector(vec![v]).unwrap()).unwrap();
        p
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = scalar_set(0.7);
        let mut adam = Adam::new(AdamConfig::default(), &p);
        p.accumulate_grads(&[vec![0.0]]).unwrap();
        adam.step(&mut p).unwrap();
        assert_eq!(p.iter().next().unwrap().1.data(), &[0.7]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar_set(1.0);
        let mut adam = Adam::new(AdamConfig::default(), &p);
        p.accumulate_grads(&[vec![1.0]]).unwrap();
        adam.step(&mut p).unwrap();
        let w = p.iter().next().unwrap().1.data()[0];
        // m_hat = v_hat = 1, so the step is lr / (1 + eps).
        assert!((1.0 - w - 1e-3).abs() < 1e-10, "{w}");
    }

    #[test]
    fn repeated_steps_move_monotonically_against_gradient() {
        let mut p = scalar_set(0.0);
        let mut adam = Adam::new(AdamConfig::default(), &p);
        let mut prev = 0.0;
        for _ in 0..3 {
            p.accumulate_grads(&[vec![2.0]]).unwrap();
            adam.step(&mut p).unwrap();
            let w = p.iter().next().unwrap().1.data()[0];
            assert!(w < prev);
            prev = w;
        }
        assert_eq!(adam.steps(), 3);
    }

    #[test]
    fn missing_gradient_is_a_contract_error() {
        let mut p = scalar_set(0.0);
        let mut adam = Adam::new(AdamConfig::default(), &p);
        assert!(matches!(adam.step(&mut p), Err(TensorError::Contract(_))));
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn grads_are_cleared_after_step() {
        let mut p = scalar_set(0.0);
        let mut adam = Adam::new(AdamConfig::default(), &p);
        p.accumulate_grads(&[vec![1.0]]).unwrap();
        adam.step(&mut p).unwrap();
        assert!(p.iter().all(|(_, t)| t.grad().is_none()));
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut p = ParamSet::new();
        p.insert("a", Tensor::matrix(2, 2, vec![0.1, -0.2, 3.0, 4.5]).unwrap())
            .unwrap();
        let before = p.clone();
        let cfg = AdamConfig {
            learning_rate: 0.0,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg, &p);
        for _ in 0..5 {
            p.accumulate_grads(&[vec![1.0, -3.0, 0.5, 9.0]]).unwrap();
            adam.step(&mut p).unwrap();
        }
        for ((_, a), (_, b)) in p.iter().zip(before.iter()) {
            assert_eq!(a.data(), b.data());
        }
    }
}
