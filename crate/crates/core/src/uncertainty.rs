//! Ensemble-averaged predictions and the entropy uncertainty estimate.
//!
//! Every operation here is label-free: none of them takes a class label.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{argmax, axpy};
use crate::nnet::{entropy_of, softmax, Entry, GradBundle, MlpModel, Tape, PROB_FLOOR};

/// Non-empty set of models sharing input width and class count.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: Vec<MlpModel>,
}

impl Ensemble {
    pub fn new(members: Vec<MlpModel>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::config("an ensemble needs at least one member"));
        };
        let (d, c) = (first.input_dim(), first.class_count());
        for (m, member) in members.iter().enumerate().skip(1) {
            if member.input_dim() != d || member.class_count() != c {
                return Err(Error::config(format!(
                    "ensemble member {m} maps {} -> {} but member 0 maps {d} -> {c}",
                    member.input_dim(),
                    member.class_count()
                )));
            }
        }
        Ok(Self { members })
    }

    pub fn single(model: MlpModel) -> Self {
        Self {
            members: vec![model],
        }
    }

    pub fn members(&self) -> &[MlpModel] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [MlpModel] {
        &mut self.members
    }

    pub fn into_members(self) -> Vec<MlpModel> {
        self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.members[0].input_dim()
    }

    pub fn class_count(&self) -> usize {
        self.members[0].class_count()
    }

    /// Width of the perturbation space for `entry`; errors if members disagree
    /// on the encoder split or latent width.
    pub fn entry_dim(&self, entry: Entry) -> Result<usize> {
        let first = &self.members[0];
        if entry == Entry::Latent {
            for (m, member) in self.members.iter().enumerate().skip(1) {
                if member.encoder_split() != first.encoder_split()
                    || member.latent_dim() != first.latent_dim()
                {
                    return Err(Error::config(format!(
                        "ensemble member {m} has encoder split {} (latent width {}) but member 0 has {} ({})",
                        member.encoder_split(),
                        member.latent_dim(),
                        first.encoder_split(),
                        first.latent_dim()
                    )));
                }
            }
        }
        Ok(first.entry_dim(entry))
    }

    /// `ŷ = (1/M) Σ_m softmax(C_m(x))`.
    pub fn avg_prediction(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.avg_prediction_at(x, None)
    }

    /// Average prediction at `C_m(E_m(x) + shift)` for every member.
    pub fn avg_prediction_at(&self, x: &[f64], shift: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut avg = vec![0.0; self.class_count()];
        let w = 1.0 / self.members.len() as f64;
        for member in &self.members {
            let p = softmax(&member.forward_shifted(x, shift)?);
            axpy(w, &p, &mut avg);
        }
        Ok(avg)
    }

    /// Predicted class (argmax of `ŷ`, ties toward the lower index).
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.avg_prediction(x)?))
    }

    pub fn predict_at(&self, x: &[f64], shift: Option<&[f64]>) -> Result<usize> {
        Ok(argmax(&self.avg_prediction_at(x, shift)?))
    }

    /// `H(x) = −Σ_c ŷ_c ln ŷ_c`.
    pub fn entropy(&self, x: &[f64]) -> Result<f64> {
        Ok(entropy_of(&self.avg_prediction(x)?))
    }

    pub fn entropy_at(&self, x: &[f64], shift: Option<&[f64]>) -> Result<f64> {
        Ok(entropy_of(&self.avg_prediction_at(x, shift)?))
    }

    /// Exact gradient of the entropy w.r.t. the input (or the latent point).
    pub fn entropy_input_grad(&self, x: &[f64], entry: Entry) -> Result<Vec<f64>> {
        self.entropy_grad_at(x, None, entry).map(|(_, g)| g)
    }

    /// Entropy value and gradient at `E(x) + shift`, w.r.t. the `entry` point.
    pub fn entropy_grad_at(&self, x: &[f64], shift: Option<&[f64]>, entry: Entry) -> Result<(f64, Vec<f64>)> {
        let fwd = self.forward_all(x, shift)?;
        let h = entropy_of(&fwd.avg);
        // ∂H/∂ŷ_c = −(ln ŷ_c + 1)
        let outer: Vec<f64> = fwd.avg.iter().map(|&q| -(q.max(PROB_FLOOR).ln() + 1.0)).collect();
        let grad = self.pullback(&fwd, entry, |_, p| softmax_vjp(p, &outer))?;
        Ok((h, grad))
    }

    /// Cross-entropy of the averaged prediction, `−ln ŷ_label`, and its entry-point gradient.
    pub fn loss_grad_at(&self, x: &[f64], shift: Option<&[f64]>, label: usize, entry: Entry) -> Result<(f64, Vec<f64>)> {
        let fwd = self.forward_all(x, shift)?;
        if label >= fwd.avg.len() {
            return Err(Error::domain(format!("label {label} out of range")));
        }
        let total: f64 = fwd.probs.iter().map(|p| p[label]).sum();
        let value = -fwd.avg[label].max(PROB_FLOOR).ln();
        // Member seed: (p_m,y / Σ_j p_j,y) (p_m − e_y); reduces to p − e_y for M = 1.
        let grad = self.pullback(&fwd, entry, |_, p| {
            let r = p[label] / total.max(PROB_FLOOR);
            let mut seed: Vec<f64> = p.iter().map(|&pc| r * pc).collect();
            seed[label] -= r;
            seed
        })?;
        Ok((value, grad))
    }

    /// `KL(reference ‖ ŷ)` and its entry-point gradient, reference held constant.
    pub fn divergence_grad_at(
        &self,
        x: &[f64],
        shift: Option<&[f64]>,
        reference: &[f64],
        entry: Entry,
    ) -> Result<(f64, Vec<f64>)> {
        let fwd = self.forward_all(x, shift)?;
        check_dim("divergence reference", fwd.avg.len(), reference.len())?;
        let value = crate::nnet::kl_divergence(reference, &fwd.avg);
        // ∂KL/∂ŷ_c = −q_c / ŷ_c
        let outer: Vec<f64> = reference
            .iter()
            .zip(&fwd.avg)
            .map(|(q, a)| -q / a.max(PROB_FLOOR))
            .collect();
        let grad = self.pullback(&fwd, entry, |_, p| softmax_vjp(p, &outer))?;
        Ok((value, grad))
    }

    fn forward_all(&self, x: &[f64], shift: Option<&[f64]>) -> Result<EnsembleForward> {
        let mut tapes = Vec::with_capacity(self.members.len());
        let mut probs = Vec::with_capacity(self.members.len());
        let mut avg = vec![0.0; self.class_count()];
        let w = 1.0 / self.members.len() as f64;
        for member in &self.members {
            let tape = member.forward_tape(x, shift)?;
            let p = softmax(tape.logits());
            axpy(w, &p, &mut avg);
            probs.push(p);
            tapes.push(tape);
        }
        Ok(EnsembleForward { tapes, probs, avg })
    }

    /// Sums `(1/M) J_mᵀ seed_m` over members, where `seed_m` is given in logit space.
    fn pullback(
        &self,
        fwd: &EnsembleForward,
        entry: Entry,
        seed: impl Fn(usize, &[f64]) -> Vec<f64>,
    ) -> Result<Vec<f64>> {
        let dim = self.entry_dim(entry)?;
        let mut grad = vec![0.0; dim];
        let w = 1.0 / self.members.len() as f64;
        for (m, member) in self.members.iter().enumerate() {
            let s = seed(m, &fwd.probs[m]);
            let g: GradBundle = member.backprop(&fwd.tapes[m], &s, entry)?;
            axpy(w, &g.input_grad, &mut grad);
        }
        Ok(grad)
    }
}

struct EnsembleForward {
    tapes: Vec<Tape>,
    probs: Vec<Vec<f64>>,
    avg: Vec<f64>,
}

/// `Jᵀ v` for the softmax Jacobian at probabilities `p`: `p ⊙ (v − p·v)`.
fn softmax_vjp(p: &[f64], v: &[f64]) -> Vec<f64> {
    let pv: f64 = p.iter().zip(v).map(|(a, b)| a * b).sum();
    p.iter().zip(v).map(|(pc, vc)| pc * (vc - pv)).collect()
}
