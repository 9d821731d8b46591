//! Central finite-difference checks of the analytic gradients.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::nnet::{Entry, GradBundle, MlpModel, Objective};
use crate::objectives::{sample_objective, TrainConfig, TrainObjective};
use crate::perturb::{Method, PerturbSpec};
use crate::{seed, Result};

/// Objective under test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CheckedObjective {
    CrossEntropy,
    Entropy,
    Divergence,
    Trades { lambda: f64 },
    Udpr { lambda: f64 },
}

impl CheckedObjective {
    pub const ALL: [CheckedObjective; 5] = [
        CheckedObjective::CrossEntropy,
        CheckedObjective::Entropy,
        CheckedObjective::Divergence,
        CheckedObjective::Trades { lambda: 0.5 },
        CheckedObjective::Udpr { lambda: 0.5 },
    ];
}

/// One (model, input, objective) triple. `delta` is the fixed perturbation of
/// the two-point objectives, `reference` the target distribution of the divergence.
#[derive(Debug, Clone)]
pub struct GradCase {
    pub model: MlpModel,
    pub x: Vec<f64>,
    pub label: usize,
    pub delta: Vec<f64>,
    pub reference: Vec<f64>,
    pub objective: CheckedObjective,
    pub entry: Entry,
}

impl GradCase {
    /// Random small network with random weights and biases, input, label and perturbation.
    pub fn random(case_seed: u64, objective: CheckedObjective) -> Result<Self> {
        let mut rng = seed::stream(case_seed);
        let d = rng.random_range(1..=4);
        let classes = rng.random_range(2..=4);
        let hidden = rng.random_range(1..=3);
        let mut dims = vec![d];
        dims.extend((0..hidden).map(|_| rng.random_range(2..=16)));
        dims.push(classes);
        let split = rng.random_range(0..=hidden);
        let mut model = MlpModel::new(&dims)?.with_encoder_split(split)?;
        model.init_params(rng.random());
        for p in model.params_mut() {
            for v in p.iter_mut() {
                *v += 0.3 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let entry = if split > 0 && rng.random_bool(0.5) { Entry::Latent } else { Entry::Input };
        let x: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let delta = (0..model.entry_dim(entry)).map(|_| rng.random_range(-0.3..0.3)).collect();
        let raw: Vec<f64> = (0..classes).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        Ok(Self {
            model,
            x,
            label: rng.random_range(0..classes),
            delta,
            reference: raw.iter().map(|v| v / total).collect(),
            objective,
            entry,
        })
    }

    fn evaluate(&self, model: &MlpModel, x: &[f64]) -> Result<GradBundle> {
        let two_point = |objective, lambda| {
            let spec = PerturbSpec::new(Method::UdpPgd, 1.0, 0.1, 2).with_entry(self.entry);
            let cfg = TrainConfig::standard(1, 1, 0.1, 0)
                .with_objective(objective, Some(spec))
                .with_lambda(lambda);
            sample_objective(model, &cfg, x, self.label, &self.delta)
        };
        match self.objective {
            CheckedObjective::CrossEntropy => model.backward(x, Objective::CrossEntropy { label: self.label }, self.entry),
            CheckedObjective::Entropy => model.backward(x, Objective::Entropy, self.entry),
            CheckedObjective::Divergence => model.backward(
                x,
                Objective::Divergence {
                    reference: &self.reference,
                },
                self.entry,
            ),
            CheckedObjective::Trades { lambda } => two_point(TrainObjective::Trades, lambda),
            CheckedObjective::Udpr { lambda } => two_point(TrainObjective::Udpr, lambda),
        }
    }

    /// Worst per-coordinate relative error of the parameter and input gradients
    /// against central differences with step `h`. Input gradients are only compared
    /// for `Entry::Input`.
    pub fn check(&self, h: f64) -> Result<GradCheck> {
        let analytic = self.evaluate(&self.model, &self.x)?;
        let mut numeric = Vec::new();
        let sizes: Vec<usize> = self.model.params().map(<[f64]>::len).collect();
        for (t, &len) in sizes.iter().enumerate() {
            for i in 0..len {
                let fd = |sign: f64| -> Result<f64> {
                    let mut m = self.model.clone();
                    m.params_mut().nth(t).expect("tensor index")[i] += sign * h;
                    Ok(self.evaluate(&m, &self.x)?.value)
                };
                numeric.push((fd(1.0)? - fd(-1.0)?) / (2.0 * h));
            }
        }
        let exact: Vec<f64> = analytic.tensors().flat_map(|t| t.iter().copied()).collect();
        let param_rel_err = rel_err(&exact, &numeric);
        let input_rel_err = if self.entry == Entry::Input {
            let numeric: Vec<f64> = (0..self.x.len())
                .map(|i| -> Result<f64> {
                    let fd = |sign: f64| -> Result<f64> {
                        let mut x = self.x.clone();
                        x[i] += sign * h;
                        Ok(self.evaluate(&self.model, &x)?.value)
                    };
                    Ok((fd(1.0)? - fd(-1.0)?) / (2.0 * h))
                })
                .collect::<Result<_>>()?;
            Some(rel_err(&analytic.input_grad, &numeric))
        } else {
            None
        };
        Ok(GradCheck {
            param_rel_err,
            input_rel_err,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub param_rel_err: f64,
    pub input_rel_err: Option<f64>,
}

impl GradCheck {
    pub fn worst(&self) -> f64 {
        self.param_rel_err.max(self.input_rel_err.unwrap_or(0.0))
    }
}

/// Largest `|a_i − b_i| / max(|a_i|, |b_i|, 1e-8)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-8))
        .fold(0.0, f64::max)
}
