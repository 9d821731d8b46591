use crate::error::{Error, Result};

use super::model::{GradBundle, MlpModel};

/// Update rule applied by [`OptimizerState::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    /// `ω ← ω − η g`.
    Sgd,
    /// Adaptive moments with bias correction.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub const fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer hyperparameters plus per-parameter moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    lr: f64,
    t: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64, model: &MlpModel) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {lr}")));
        }
        let zeros: Vec<Vec<f64>> = model.params().map(|p| vec![0.0; p.len()]).collect();
        Ok(Self {
            kind,
            lr,
            t: 0,
            second: zeros.clone(),
            first: zeros,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.first, &self.second)
    }

    /// Applies one update of `grads` to `model` in place.
    pub fn step(&mut self, model: &mut MlpModel, grads: &GradBundle) {
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in model.params_mut().zip(grads.tensors()) {
                    for (pi, gi) in p.iter_mut().zip(g) {
                        *pi -= self.lr * gi;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.t as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let tensors = model
                    .params_mut()
                    .zip(grads.tensors())
                    .zip(self.first.iter_mut().zip(self.second.iter_mut()));
                for ((p, g), (m, v)) in tensors {
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] -= self.lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::Entry;

    fn scalar_model(w: f64) -> MlpModel {
        let mut m = MlpModel::new(&[1, 1]).unwrap();
        m.layers_mut()[0].weights.set(0, 0, w);
        m
    }

    fn scalar_grad(m: &MlpModel, g: f64) -> GradBundle {
        let mut b = GradBundle::zeros_like(m, Entry::Input);
        b.param_grads[0].weights.set(0, 0, g);
        b
    }

    #[test]
    fn sgd_one_step() {
        let mut m = scalar_model(1.0);
        let g = scalar_grad(&m, 2.0);
        let mut opt = OptimizerState::new(OptimizerKind::Sgd, 0.1, &m).unwrap();
        opt.step(&mut m, &g);
        assert!((m.layers()[0].weights.get(0, 0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_model_unchanged() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::adam()] {
            let mut m = MlpModel::new(&[3, 4, 2]).unwrap();
            m.init_params(5);
            let before = m.clone();
            let g = GradBundle::zeros_like(&m, Entry::Input);
            let mut opt = OptimizerState::new(kind, 0.01, &m).unwrap();
            opt.step(&mut m, &g);
            assert_eq!(m, before);
        }
    }

    #[test]
    fn accumulators_start_at_zero() {
        let m = MlpModel::new(&[2, 3, 2]).unwrap();
        let opt = OptimizerState::new(OptimizerKind::adam(), 0.01, &m).unwrap();
        let (f, s) = opt.moments();
        assert!(f.iter().chain(s).flatten().all(|&v| v == 0.0));
        assert!(OptimizerState::new(OptimizerKind::Sgd, 0.0, &m).is_err());
    }

    #[test]
    fn adam_step_tends_to_learning_rate() {
        // Independent scalar recurrence of the bias-corrected moment update.
        let (b1, b2, eps, lr, g) = (0.9_f64, 0.999_f64, 1e-8_f64, 0.01_f64, 0.37_f64);
        let (mut mm, mut vv) = (0.0_f64, 0.0_f64);
        let mut expected_steps = Vec::new();
        for t in 1..=200 {
            mm = b1 * mm + (1.0 - b1) * g;
            vv = b2 * vv + (1.0 - b2) * g * g;
            let step = lr * (mm / (1.0 - b1.powi(t))) / ((vv / (1.0 - b2.powi(t))).sqrt() + eps);
            expected_steps.push(step);
        }

        let mut m = scalar_model(0.0);
        let grads = scalar_grad(&m, g);
        let mut opt = OptimizerState::new(OptimizerKind::adam(), lr, &m).unwrap();
        let mut prev = 0.0;
        for expected in expected_steps {
            opt.step(&mut m, &grads);
            let w = m.layers()[0].weights.get(0, 0);
            let step = prev - w;
            assert!((step - expected).abs() < 1e-15);
            prev = w;
        }
        assert!((prev.abs() / 200.0 - lr).abs() / lr < 1e-6);
    }
}
