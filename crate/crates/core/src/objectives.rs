//! Training loops: standard ERM, perturbed ERM (any engine), TRADES and UDPR.
//!
//! Every step perturbs the mini-batch against the frozen pre-step ensemble,
//! fans the per-sample gradients out over the thread pool, reduces them in
//! batch order and then applies one optimizer update per member. Each member
//! descends on its own loss at the shared perturbed points.

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::analysis::{accuracy, robust_accuracy};
use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::exec::try_map_indexed;
use crate::linalg::norm_inf;
use crate::nnet::{softmax, Entry, GradBundle, MlpModel, Objective, OptimizerKind, OptimizerState, PROB_FLOOR};
use crate::perturb::{displaced, divergence_pgd, perturb, Method, PerturbSpec};
use crate::seed;
use crate::uncertainty::Ensemble;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainObjective {
    Standard,
    /// Loss at the perturbed point only.
    ErmP,
    /// `L(x) + λ·KL(p(x) ‖ p(x + δ))` with `δ` maximising the divergence.
    Trades,
    /// `L(x) + λ·L(x + δ_u)` with `δ_u` from udp-pgd.
    Udpr,
}

impl TrainObjective {
    pub fn name(self) -> &'static str {
        match self {
            TrainObjective::Standard => "standard",
            TrainObjective::ErmP => "erm-p",
            TrainObjective::Trades => "trades",
            TrainObjective::Udpr => "udpr",
        }
    }
}

impl std::str::FromStr for TrainObjective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "erm-p" => Ok(Self::ErmP),
            "trades" => Ok(Self::Trades),
            "udpr" => Ok(Self::Udpr),
            other => Err(Error::config(format!("unknown objective `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// `η_t = η·min(1, (t + 1)/steps)`.
    LinearRamp { steps: usize },
}

impl LrSchedule {
    pub fn rate(self, base: f64, step: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::LinearRamp { steps } => base * ((step + 1) as f64 / steps.max(1) as f64).min(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    pub objective: TrainObjective,
    /// Required by every objective except `Standard`.
    pub perturb: Option<PerturbSpec>,
    /// Regularizer weight for trades and udpr, in `(0, 1)`.
    pub lambda: f64,
    pub seed: u64,
    /// Steps between trace rows. Rows are also written before the first and
    /// after the last step.
    pub checkpoint_every: usize,
    /// Attack used for the robust-accuracy column.
    pub probe: Option<PerturbSpec>,
    /// Keep a copy of the ensemble at every trace row.
    pub keep_snapshots: bool,
}

impl TrainConfig {
    pub fn standard(epochs: usize, batch_size: usize, learning_rate: f64, seed: u64) -> Self {
        Self {
            epochs,
            batch_size,
            optimizer: OptimizerKind::adam(),
            learning_rate,
            schedule: LrSchedule::Constant,
            objective: TrainObjective::Standard,
            perturb: None,
            lambda: 0.5,
            seed,
            checkpoint_every: 50,
            probe: None,
            keep_snapshots: false,
        }
    }

    pub fn with_objective(mut self, objective: TrainObjective, spec: Option<PerturbSpec>) -> Self {
        self.objective = objective;
        self.perturb = spec;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_optimizer(mut self, optimizer: OptimizerKind) -> Self {
        self.optimizer = optimizer;
        self
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.batch_size == 0 {
            v.push("batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            v.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.checkpoint_every == 0 {
            v.push("checkpoint_every must be >= 1".into());
        }
        if let LrSchedule::LinearRamp { steps: 0 } = self.schedule {
            v.push("linear ramp needs steps >= 1".into());
        }
        let name = self.objective.name();
        match (self.objective, &self.perturb) {
            (TrainObjective::Standard, _) => {}
            (_, None) => v.push(format!("objective {name} needs a perturbation spec")),
            (_, Some(spec)) => {
                v.extend(spec.violations().into_iter().map(|m| format!("perturb: {m}")));
                if self.objective == TrainObjective::Udpr && spec.method != Method::UdpPgd {
                    v.push(format!("udpr needs method udp-pgd, got {}", spec.method.name()));
                }
            }
        }
        if matches!(self.objective, TrainObjective::Trades | TrainObjective::Udpr)
            && !(self.lambda > 0.0 && self.lambda < 1.0)
        {
            v.push(format!("lambda must lie in (0, 1) for {name}, got {}", self.lambda));
        }
        if let Some(p) = &self.probe {
            if !matches!(p.method, Method::Fgsm | Method::LdpPgd) {
                v.push(format!("probe attack must be fgsm or ldp-pgd, got {}", p.method.name()));
            }
            v.extend(p.violations().into_iter().map(|m| format!("probe: {m}")));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::config(v.join("; ")))
        }
    }

    fn entry(&self) -> Entry {
        self.perturb.map(|p| p.entry).unwrap_or_default()
    }
}

/// Members initialised from the same widths with seeds derived from `seed`.
pub fn init_ensemble(layer_dims: &[usize], members: usize, encoder_split: usize, seed: u64) -> Result<Ensemble> {
    if members == 0 {
        return Err(Error::config("an ensemble needs at least one member"));
    }
    let models = (0..members)
        .map(|m| {
            let mut model = MlpModel::new(layer_dims)?.with_encoder_split(encoder_split)?;
            model.init_params(seed::derive_named(seed, "init", &[m as u64]));
            Ok(model)
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(models)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub epoch: usize,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    pub robust_acc: Option<f64>,
    /// Mean `‖δ‖∞` over the steps since the previous row.
    pub mean_perturbation: f64,
    /// Index into [`TrainTrace::snapshots`].
    pub snapshot: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    pub snapshots: Vec<Ensemble>,
}

impl TrainTrace {
    /// Header `step,epoch,train_acc,test_acc,robust_acc,mean_perturbation,snapshot`;
    /// absent values are empty fields.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = String::from("step,epoch,train_acc,test_acc,robust_acc,mean_perturbation,snapshot\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.step,
                r.epoch,
                r.train_acc,
                opt(r.test_acc),
                opt(r.robust_acc),
                r.mean_perturbation,
                r.snapshot.map(|i| i.to_string()).unwrap_or_default()
            );
        }
        s
    }
}

/// Mean gradients of one batch under the frozen ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradients {
    /// One per member, averaged over the batch.
    pub grads: Vec<GradBundle>,
    /// Mean objective over batch and members.
    pub loss: f64,
    /// Perturbation used for each batch element.
    pub deltas: Vec<Vec<f64>>,
}

impl BatchGradients {
    pub fn mean_perturbation(&self) -> f64 {
        if self.deltas.is_empty() {
            return 0.0;
        }
        self.deltas.iter().map(|d| norm_inf(d)).sum::<f64>() / self.deltas.len() as f64
    }
}

/// Objective value and parameter gradient of a single member at one sample.
pub fn sample_objective(
    model: &MlpModel,
    cfg: &TrainConfig,
    x: &[f64],
    label: usize,
    delta: &[f64],
) -> Result<GradBundle> {
    let entry = cfg.entry();
    let (moved, shift) = displaced(x, delta, entry);
    let ce = Objective::CrossEntropy { label };
    match cfg.objective {
        TrainObjective::Standard => model.backward(x, ce, entry),
        TrainObjective::ErmP => model.backward_shifted(&moved, shift.as_deref(), ce, entry),
        TrainObjective::Udpr => {
            let mut g = model.backward(x, ce, entry)?;
            let r = model.backward_shifted(&moved, shift.as_deref(), ce, entry)?;
            g.add_scaled(&r, cfg.lambda);
            Ok(g)
        }
        TrainObjective::Trades => trades_gradient(model, cfg.lambda, x, label, &moved, shift.as_deref(), entry),
    }
}

/// `CE(x) + λ·KL(p(x) ‖ p(x + δ))`, differentiated through both arguments.
fn trades_gradient(
    model: &MlpModel,
    lambda: f64,
    x: &[f64],
    label: usize,
    moved: &[f64],
    shift: Option<&[f64]>,
    entry: Entry,
) -> Result<GradBundle> {
    let clean = model.forward_tape(x, None)?;
    let adv = model.forward_tape(moved, shift)?;
    let p = softmax(clean.logits());
    let q = softmax(adv.logits());
    let lp: Vec<f64> = p.iter().map(|v| v.max(PROB_FLOOR).ln()).collect();
    let lq: Vec<f64> = q.iter().map(|v| v.max(PROB_FLOOR).ln()).collect();
    let kl: f64 = (0..p.len()).map(|c| if p[c] > 0.0 { p[c] * (lp[c] - lq[c]) } else { 0.0 }).sum();
    // d KL / d z_clean = p ⊙ (v − p·v), v = ln p − ln q
    let v: Vec<f64> = lp.iter().zip(&lq).map(|(a, b)| a - b).collect();
    let pv: f64 = p.iter().zip(&v).map(|(a, b)| a * b).sum();
    let mut clean_seed: Vec<f64> = p.iter().zip(&v).map(|(pc, vc)| lambda * pc * (vc - pv)).collect();
    for (s, pc) in clean_seed.iter_mut().zip(&p) {
        *s += pc;
    }
    clean_seed[label] -= 1.0;
    let adv_seed: Vec<f64> = q.iter().zip(&p).map(|(qc, pc)| lambda * (qc - pc)).collect();
    let mut g = model.backprop(&clean, &clean_seed, entry)?;
    let ga = model.backprop(&adv, &adv_seed, entry)?;
    g.add_scaled(&ga, 1.0);
    g.value = -p[label].max(PROB_FLOOR).ln() + lambda * kl;
    Ok(g)
}

/// Samples per reduction chunk. Fixed so the summation order never depends on
/// the thread count.
const CHUNK: usize = 8;

pub struct Trainer {
    ensemble: Ensemble,
    optimizers: Vec<OptimizerState>,
    cfg: TrainConfig,
    step: usize,
}

impl Trainer {
    pub fn new(ensemble: Ensemble, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let optimizers = ensemble
            .members()
            .iter()
            .map(|m| OptimizerState::new(cfg.optimizer, cfg.learning_rate, m))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            ensemble,
            optimizers,
            cfg,
            step: 0,
        })
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn into_ensemble(self) -> Ensemble {
        self.ensemble
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    fn perturbation(&self, x: &[f64], label: usize, position: usize) -> Result<Vec<f64>> {
        let ens = &self.ensemble;
        let dim = ens.entry_dim(self.cfg.entry())?;
        let Some(spec) = self.cfg.perturb.filter(|_| self.cfg.objective != TrainObjective::Standard) else {
            return Ok(vec![0.0; dim]);
        };
        let mut rng = seed::stream(seed::derive_named(
            self.cfg.seed,
            "perturb",
            &[self.step as u64, position as u64],
        ));
        let r = match self.cfg.objective {
            TrainObjective::Trades => {
                let (point, shift) = displaced(x, &vec![0.0; dim], spec.entry);
                let reference = ens.avg_prediction_at(&point, shift.as_deref())?;
                divergence_pgd(ens, x, &reference, &spec, &mut rng)?
            }
            _ => perturb(ens, x, Some(label), &spec, &mut rng)?,
        };
        Ok(r.delta)
    }

    /// Perturbs `batch` against the current parameters and returns the mean
    /// per-member gradients. Does not modify the trainer.
    pub fn batch_gradients(&self, data: &LabeledSet, batch: &[usize]) -> Result<BatchGradients> {
        if batch.is_empty() {
            return Err(Error::config("empty batch"));
        }
        let deltas = try_map_indexed(batch.len(), |k| {
            let i = batch[k];
            self.perturbation(data.point(i), data.label(i), k)
        })?;
        self.gradients_at(data, batch, deltas)
    }

    /// Mean gradients for a batch with the perturbations supplied.
    pub fn gradients_at(&self, data: &LabeledSet, batch: &[usize], deltas: Vec<Vec<f64>>) -> Result<BatchGradients> {
        crate::error::check_dim("batch perturbations", batch.len(), deltas.len())?;
        let members = self.ensemble.members();
        let entry = self.cfg.entry();
        let chunks = batch.len().div_ceil(CHUNK);
        let partial = try_map_indexed(chunks, |c| -> Result<Vec<GradBundle>> {
            let mut acc: Vec<GradBundle> = members.iter().map(|m| GradBundle::zeros_like(m, entry)).collect();
            for k in c * CHUNK..((c + 1) * CHUNK).min(batch.len()) {
                let i = batch[k];
                for (m, model) in members.iter().enumerate() {
                    let g = sample_objective(model, &self.cfg, data.point(i), data.label(i), &deltas[k])?;
                    acc[m].add_scaled(&g, 1.0);
                }
            }
            Ok(acc)
        })?;
        let mut grads: Vec<GradBundle> = members.iter().map(|m| GradBundle::zeros_like(m, entry)).collect();
        for part in &partial {
            for (g, p) in grads.iter_mut().zip(part) {
                g.add_scaled(p, 1.0);
            }
        }
        let scale = 1.0 / batch.len() as f64;
        for g in &mut grads {
            g.scale(scale);
            g.value *= scale;
        }
        let loss = grads.iter().map(|g| g.value).sum::<f64>() / grads.len() as f64;
        Ok(BatchGradients { grads, loss, deltas })
    }

    /// Mean objective over `batch` at fixed perturbations, under the current parameters.
    pub fn objective_at(&self, data: &LabeledSet, batch: &[usize], deltas: &[Vec<f64>]) -> Result<f64> {
        self.gradients_at(data, batch, deltas.to_vec()).map(|g| g.loss)
    }

    /// One optimizer step on `batch`.
    pub fn step(&mut self, data: &LabeledSet, batch: &[usize]) -> Result<BatchGradients> {
        let g = self.batch_gradients(data, batch)?;
        let lr = self.cfg.schedule.rate(self.cfg.learning_rate, self.step);
        for ((model, opt), grad) in self
            .ensemble
            .members_mut()
            .iter_mut()
            .zip(&mut self.optimizers)
            .zip(&g.grads)
        {
            opt.set_lr(lr);
            opt.step(model, grad);
        }
        self.step += 1;
        Ok(g)
    }

    /// Mini-batch order of `epoch`: a seeded shuffle, cut into `batch_size` pieces.
    pub fn epoch_batches(&self, n: usize, epoch: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::stream(seed::derive_named(self.cfg.seed, "shuffle", &[epoch as u64])));
        order.chunks(self.cfg.batch_size).map(<[usize]>::to_vec).collect()
    }

    fn record(&self, data: &LabeledSet, test: Option<&LabeledSet>, epoch: usize, pert: f64, trace: &mut TrainTrace) -> Result<()> {
        let probe_set = test.unwrap_or(data);
        let robust_acc = match &self.cfg.probe {
            Some(p) => Some(robust_accuracy(
                &self.ensemble,
                probe_set,
                p,
                seed::derive_named(self.cfg.seed, "probe", &[self.step as u64]),
            )?),
            None => None,
        };
        let snapshot = if self.cfg.keep_snapshots {
            trace.snapshots.push(self.ensemble.clone());
            Some(trace.snapshots.len() - 1)
        } else {
            None
        };
        trace.rows.push(TraceRow {
            step: self.step,
            epoch,
            train_acc: accuracy(&self.ensemble, data)?,
            test_acc: test.map(|t| accuracy(&self.ensemble, t)).transpose()?,
            robust_acc,
            mean_perturbation: pert,
            snapshot,
        });
        Ok(())
    }

    /// Runs `cfg.epochs` epochs and returns the trace.
    pub fn run(&mut self, data: &LabeledSet, test: Option<&LabeledSet>) -> Result<TrainTrace> {
        if data.is_empty() {
            return Err(Error::config("training on an empty dataset"));
        }
        crate::error::check_dim("training data", self.ensemble.input_dim(), data.dim())?;
        let mut trace = TrainTrace::default();
        self.record(data, test, 0, 0.0, &mut trace)?;
        let (mut pert_sum, mut pert_steps) = (0.0, 0usize);
        for epoch in 0..self.cfg.epochs {
            for batch in self.epoch_batches(data.len(), epoch) {
                let g = self.step(data, &batch)?;
                pert_sum += g.mean_perturbation();
                pert_steps += 1;
                if self.step % self.cfg.checkpoint_every == 0 {
                    self.record(data, test, epoch + 1, pert_sum / pert_steps as f64, &mut trace)?;
                    (pert_sum, pert_steps) = (0.0, 0);
                }
            }
        }
        if pert_steps > 0 {
            self.record(data, test, self.cfg.epochs, pert_sum / pert_steps as f64, &mut trace)?;
        }
        Ok(trace)
    }
}

fn train_with(
    ens: Ensemble,
    data: &LabeledSet,
    cfg: &TrainConfig,
    expected: TrainObjective,
) -> Result<(Ensemble, TrainTrace)> {
    if cfg.objective != expected {
        return Err(Error::config(format!(
            "config objective is {} but {} training was requested",
            cfg.objective.name(),
            expected.name()
        )));
    }
    train(ens, data, None, cfg)
}

/// Trains with whichever objective `cfg` names.
pub fn train(ens: Ensemble, data: &LabeledSet, test: Option<&LabeledSet>, cfg: &TrainConfig) -> Result<(Ensemble, TrainTrace)> {
    let mut t = Trainer::new(ens, cfg.clone())?;
    let trace = t.run(data, test)?;
    Ok((t.into_ensemble(), trace))
}

pub fn train_standard(ens: Ensemble, data: &LabeledSet, cfg: &TrainConfig) -> Result<(Ensemble, TrainTrace)> {
    train_with(ens, data, cfg, TrainObjective::Standard)
}

pub fn train_perturbed(ens: Ensemble, data: &LabeledSet, cfg: &TrainConfig) -> Result<(Ensemble, TrainTrace)> {
    train_with(ens, data, cfg, TrainObjective::ErmP)
}

pub fn train_trades(ens: Ensemble, data: &LabeledSet, cfg: &TrainConfig) -> Result<(Ensemble, TrainTrace)> {
    train_with(ens, data, cfg, TrainObjective::Trades)
}

pub fn train_udpr(ens: Ensemble, data: &LabeledSet, cfg: &TrainConfig) -> Result<(Ensemble, TrainTrace)> {
    train_with(ens, data, cfg, TrainObjective::Udpr)
}
