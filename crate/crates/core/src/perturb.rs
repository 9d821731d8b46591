//! Perturbation search inside the L∞ ball: FGSM, R-FGSM, loss-driven PGD
//! and uncertainty-driven PGD (with randomised step count).

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::linalg::{argmax, sign};
use crate::nnet::Entry;
use crate::uncertainty::Ensemble;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Fgsm,
    Rfgsm,
    LdpPgd,
    UdpPgd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Fgsm => "fgsm",
            Method::Rfgsm => "rfgsm",
            Method::LdpPgd => "ldp-pgd",
            Method::UdpPgd => "udp-pgd",
        }
    }

    pub fn needs_label(self) -> bool {
        !matches!(self, Method::UdpPgd)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fgsm" => Ok(Method::Fgsm),
            "rfgsm" => Ok(Method::Rfgsm),
            "ldp-pgd" | "pgd" => Ok(Method::LdpPgd),
            "udp-pgd" | "udp" => Ok(Method::UdpPgd),
            other => Err(Error::config(format!("unknown perturbation method `{other}`"))),
        }
    }
}

/// Hyperparameters of one perturbation search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbSpec {
    /// L∞ radius.
    pub epsilon: f64,
    /// Per-step size.
    pub alpha: f64,
    /// `K`: number of PGD steps, or the upper end of the random step count.
    pub max_steps: usize,
    pub method: Method,
    /// Draw `k ~ U{1, …, K−1}` per call (udp-pgd only).
    pub randomize_steps: bool,
    /// Begin from `ξ ~ U[−ε, ε]^d` instead of 0.
    pub random_start: bool,
    pub entry: Entry,
}

impl PerturbSpec {
    /// Defaults for `method`: random start only for R-FGSM, fixed step count.
    pub fn new(method: Method, epsilon: f64, alpha: f64, max_steps: usize) -> Self {
        Self {
            epsilon,
            alpha,
            max_steps,
            method,
            randomize_steps: false,
            random_start: matches!(method, Method::Rfgsm),
            entry: Entry::Input,
        }
    }

    pub fn with_randomized_steps(mut self, on: bool) -> Self {
        self.randomize_steps = on;
        self
    }

    pub fn with_random_start(mut self, on: bool) -> Self {
        self.random_start = on;
        self
    }

    pub fn with_entry(mut self, entry: Entry) -> Self {
        self.entry = entry;
        self
    }

    /// All constraint violations, as human-readable messages.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            v.push(format!("epsilon must be finite and >= 0 (got {})", self.epsilon));
        }
        let alpha_needed = !(self.method == Method::Fgsm);
        if alpha_needed && !(self.alpha > 0.0 && self.alpha.is_finite()) {
            v.push(format!("alpha must be > 0 (got {})", self.alpha));
        }
        if self.max_steps < 1 {
            v.push("max_steps must be >= 1".to_string());
        }
        if self.randomize_steps && self.max_steps < 2 {
            v.push(format!(
                "randomize_steps draws k from {{1..K-1}} and needs K >= 2 (got K = {})",
                self.max_steps
            ));
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
}

/// Outcome of one perturbation search.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbResult {
    pub delta: Vec<f64>,
    /// PGD: `K`. UDP: the step count `k` (drawn or fixed). FGSM variants: 1.
    pub steps_taken: usize,
    /// Gradient updates actually applied; UDP runs `k + 1` (`i = 0..=k`).
    pub updates: usize,
    /// Predicted class at the perturbed point differs from the clean prediction.
    pub crossed_boundary: bool,
}

/// Per-coordinate clamp to `[−ε, ε]`.
pub fn project_linf(delta: &[f64], epsilon: f64) -> Vec<f64> {
    delta.iter().map(|d| d.clamp(-epsilon, epsilon)).collect()
}

fn project_in_place(delta: &mut [f64], epsilon: f64) {
    for d in delta {
        *d = d.clamp(-epsilon, epsilon);
    }
}

/// What an engine climbs.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Ascent<'a> {
    Loss(usize),
    Entropy,
    Divergence(&'a [f64]),
}

/// Evaluates `(value, gradient)` of the ascent objective at perturbation `delta`.
pub(crate) fn ascent_grad(
    ens: &Ensemble,
    x: &[f64],
    delta: &[f64],
    entry: Entry,
    ascent: Ascent<'_>,
) -> Result<(f64, Vec<f64>)> {
    let (point, shift) = displaced(x, delta, entry);
    let shift = shift.as_deref();
    match ascent {
        Ascent::Loss(label) => ens.loss_grad_at(&point, shift, label, entry),
        Ascent::Entropy => ens.entropy_grad_at(&point, shift, entry),
        Ascent::Divergence(reference) => ens.divergence_grad_at(&point, shift, reference, entry),
    }
}

/// Splits a perturbation into an input point and an optional latent shift.
pub fn displaced(x: &[f64], delta: &[f64], entry: Entry) -> (Vec<f64>, Option<Vec<f64>>) {
    match entry {
        Entry::Input => (x.iter().zip(delta).map(|(a, b)| a + b).collect(), None),
        Entry::Latent => (x.to_vec(), Some(delta.to_vec())),
    }
}

/// Prediction of `ens` at `x` displaced by `delta` in the `entry` space.
pub fn predict_displaced(ens: &Ensemble, x: &[f64], delta: &[f64], entry: Entry) -> Result<usize> {
    let (point, shift) = displaced(x, delta, entry);
    ens.predict_at(&point, shift.as_deref())
}

fn finish(ens: &Ensemble, x: &[f64], delta: Vec<f64>, entry: Entry, steps: usize, updates: usize) -> Result<PerturbResult> {
    let zero = vec![0.0; delta.len()];
    let clean = predict_displaced(ens, x, &zero, entry)?;
    let moved = predict_displaced(ens, x, &delta, entry)?;
    Ok(PerturbResult {
        delta,
        steps_taken: steps,
        updates,
        crossed_boundary: clean != moved,
    })
}

fn check_method(spec: &PerturbSpec, expected: Method) -> Result<()> {
    spec.validate()?;
    if spec.method != expected {
        return Err(Error::config(format!(
            "spec method is {} but {} was invoked",
            spec.method.name(),
            expected.name()
        )));
    }
    Ok(())
}

fn check_input(ens: &Ensemble, x: &[f64]) -> Result<()> {
    crate::error::check_dim("perturbation input", ens.input_dim(), x.len())
}

fn uniform_ball<R: Rng + ?Sized>(dim: usize, epsilon: f64, rng: &mut R) -> Vec<f64> {
    if epsilon == 0.0 {
        return vec![0.0; dim];
    }
    let u = Uniform::new_inclusive(-epsilon, epsilon).expect("finite epsilon");
    (0..dim).map(|_| u.sample(rng)).collect()
}

/// `δ = ε·sign(∇ L)`.
pub fn fgsm(ens: &Ensemble, x: &[f64], label: usize, spec: &PerturbSpec) -> Result<PerturbResult> {
    check_method(spec, Method::Fgsm)?;
    check_input(ens, x)?;
    let dim = ens.entry_dim(spec.entry)?;
    let zero = vec![0.0; dim];
    let (_, g) = ascent_grad(ens, x, &zero, spec.entry, Ascent::Loss(label))?;
    let delta = g.iter().map(|&gi| spec.epsilon * sign(gi)).collect();
    finish(ens, x, delta, spec.entry, 1, 1)
}

/// `δ = Π(ξ + α·sign(∇ L(x + ξ)))`, `ξ ~ U[−ε, ε]^d`.
pub fn rfgsm<R: Rng + ?Sized>(
    ens: &Ensemble,
    x: &[f64],
    label: usize,
    spec: &PerturbSpec,
    rng: &mut R,
) -> Result<PerturbResult> {
    check_method(spec, Method::Rfgsm)?;
    check_input(ens, x)?;
    let dim = ens.entry_dim(spec.entry)?;
    let mut delta = uniform_ball(dim, spec.epsilon, rng);
    let (_, g) = ascent_grad(ens, x, &delta, spec.entry, Ascent::Loss(label))?;
    for (d, gi) in delta.iter_mut().zip(&g) {
        *d += spec.alpha * sign(*gi);
    }
    project_in_place(&mut delta, spec.epsilon);
    finish(ens, x, delta, spec.entry, 1, 1)
}

/// K steps of signed gradient ascent on an objective, projected after every step.
pub(crate) fn signed_ascent(
    ens: &Ensemble,
    x: &[f64],
    mut delta: Vec<f64>,
    spec: &PerturbSpec,
    updates: usize,
    ascent: Ascent<'_>,
) -> Result<Vec<f64>> {
    project_in_place(&mut delta, spec.epsilon);
    for step in 0..updates {
        let (value, g) = ascent_grad(ens, x, &delta, spec.entry, ascent)?;
        if !value.is_finite() {
            return Err(Error::domain(format!(
                "non-finite objective {value} at step {step} of {}",
                spec.method.name()
            )));
        }
        for (d, gi) in delta.iter_mut().zip(&g) {
            *d += spec.alpha * sign(*gi);
        }
        project_in_place(&mut delta, spec.epsilon);
    }
    Ok(delta)
}

/// Loss-driven PGD-K.
pub fn ldp_pgd<R: Rng + ?Sized>(
    ens: &Ensemble,
    x: &[f64],
    label: usize,
    spec: &PerturbSpec,
    rng: &mut R,
) -> Result<PerturbResult> {
    check_method(spec, Method::LdpPgd)?;
    check_input(ens, x)?;
    let dim = ens.entry_dim(spec.entry)?;
    let start = if spec.random_start {
        uniform_ball(dim, spec.epsilon, rng)
    } else {
        vec![0.0; dim]
    };
    let delta = signed_ascent(ens, x, start, spec, spec.max_steps, Ascent::Loss(label))?;
    finish(ens, x, delta, spec.entry, spec.max_steps, spec.max_steps)
}

/// Draws the UDP step count: `K` when fixed, otherwise uniform on `{1, …, K−1}`.
pub fn draw_step_count<R: Rng + ?Sized>(spec: &PerturbSpec, rng: &mut R) -> Result<usize> {
    if !spec.randomize_steps {
        return Ok(spec.max_steps);
    }
    if spec.max_steps < 2 {
        return Err(Error::config("randomize_steps needs max_steps >= 2"));
    }
    Ok(rng.random_range(1..spec.max_steps))
}

/// Uncertainty-driven PGD: signed ascent on the ensemble entropy. Takes no label.
pub fn udp_pgd<R: Rng + ?Sized>(ens: &Ensemble, x: &[f64], spec: &PerturbSpec, rng: &mut R) -> Result<PerturbResult> {
    check_method(spec, Method::UdpPgd)?;
    check_input(ens, x)?;
    let dim = ens.entry_dim(spec.entry)?;
    let k = draw_step_count(spec, rng)?;
    let start = if spec.random_start {
        uniform_ball(dim, spec.epsilon, rng)
    } else {
        vec![0.0; dim]
    };
    let delta = signed_ascent(ens, x, start, spec, k + 1, Ascent::Entropy)?;
    finish(ens, x, delta, spec.entry, k, k + 1)
}

/// Runs the engine selected by `spec.method`. `label` is ignored by udp-pgd.
pub fn perturb<R: Rng + ?Sized>(
    ens: &Ensemble,
    x: &[f64],
    label: Option<usize>,
    spec: &PerturbSpec,
    rng: &mut R,
) -> Result<PerturbResult> {
    let need = || label.ok_or_else(|| Error::config(format!("{} needs a label", spec.method.name())));
    match spec.method {
        Method::Fgsm => fgsm(ens, x, need()?, spec),
        Method::Rfgsm => rfgsm(ens, x, need()?, spec, rng),
        Method::LdpPgd => ldp_pgd(ens, x, need()?, spec, rng),
        Method::UdpPgd => udp_pgd(ens, x, spec, rng),
    }
}

/// Latent-space search: `z = E(x)`, `δ ∈ R^l`, objective through the classifier head.
pub fn perturb_latent<R: Rng + ?Sized>(
    ens: &Ensemble,
    x: &[f64],
    label: Option<usize>,
    spec: &PerturbSpec,
    rng: &mut R,
) -> Result<PerturbResult> {
    if ens.members().iter().any(|m| m.encoder_split() == 0) {
        return Err(Error::config("latent perturbation needs an encoder split > 0"));
    }
    perturb(ens, x, label, &spec.with_entry(Entry::Latent), rng)
}

/// Argmax of the divergence-maximising search used by TRADES: PGD on
/// `KL(reference ‖ ŷ(x + δ))` from a small Gaussian start (σ = 0.001, clamped to the ball).
pub fn divergence_pgd<R: Rng + ?Sized>(
    ens: &Ensemble,
    x: &[f64],
    reference: &[f64],
    spec: &PerturbSpec,
    rng: &mut R,
) -> Result<PerturbResult> {
    spec.validate()?;
    check_input(ens, x)?;
    let dim = ens.entry_dim(spec.entry)?;
    let normal = Normal::new(0.0, 1e-3).expect("valid sigma");
    let start: Vec<f64> = if spec.epsilon == 0.0 {
        vec![0.0; dim]
    } else {
        (0..dim).map(|_| normal.sample(rng)).collect()
    };
    let delta = signed_ascent(ens, x, start, spec, spec.max_steps, Ascent::Divergence(reference))?;
    finish(ens, x, delta, spec.entry, spec.max_steps, spec.max_steps)
}

/// Predicted class of the clean point, exposed for crossing statistics.
pub fn clean_prediction(ens: &Ensemble, x: &[f64]) -> Result<usize> {
    Ok(argmax(&ens.avg_prediction(x)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm_inf, Matrix};
    use crate::nnet::{softmax, Activation, Layer, MlpModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Binary 1D model with logits (0, w·x + b): class 1 iff w·x + b > 0.
    fn line1d(w: f64, b: f64) -> Ensemble {
        Ensemble::single(
            MlpModel::from_layers(
                vec![Layer {
                    weights: Matrix::from_vec(2, 1, vec![0.0, w]),
                    bias: vec![0.0, b],
                }],
                Activation::Relu,
                0,
            )
            .unwrap(),
        )
    }

    fn random_net(seed: u64) -> Ensemble {
        let mut m = MlpModel::new(&[3, 8, 3]).unwrap();
        m.init_params(seed);
        Ensemble::single(m)
    }

    #[test]
    fn projection_cases() {
        assert_eq!(project_linf(&[0.3, -0.7], 0.5), vec![0.3, -0.5]);
        assert_eq!(project_linf(&[0.1, -0.2], 0.5), vec![0.1, -0.2]);
        assert_eq!(project_linf(&[0.1, -0.2], 0.0), vec![0.0, 0.0]);
        let once = project_linf(&[2.0, -3.0, 0.1], 1.0);
        assert_eq!(project_linf(&once, 1.0), once);
    }

    #[test]
    fn fgsm_zero_radius_and_homogeneity() {
        let ens = random_net(1);
        let x = [0.2, -0.4, 0.9];
        let zero = fgsm(&ens, &x, 1, &PerturbSpec::new(Method::Fgsm, 0.0, 0.0, 1)).unwrap();
        assert!(zero.delta.iter().all(|&d| d == 0.0));
        let a = fgsm(&ens, &x, 1, &PerturbSpec::new(Method::Fgsm, 0.1, 0.0, 1)).unwrap();
        let b = fgsm(&ens, &x, 1, &PerturbSpec::new(Method::Fgsm, 0.2, 0.0, 1)).unwrap();
        for (da, db) in a.delta.iter().zip(&b.delta) {
            assert_eq!(2.0 * da, *db);
            assert!(da.abs() == 0.1 || *da == 0.0);
        }
    }

    #[test]
    fn fgsm_linear_closed_form() {
        let w = Matrix::from_vec(2, 3, vec![0.5, -1.0, 0.0, -0.25, 2.0, 1.0]);
        let b = vec![0.1, -0.3];
        let model = MlpModel::from_layers(
            vec![Layer { weights: w.clone(), bias: b.clone() }],
            Activation::Relu,
            0,
        )
        .unwrap();
        let x = [0.3, 0.6, -1.2];
        let label = 0;
        let mut residual = softmax(&model.forward(&x).unwrap());
        residual[label] -= 1.0;
        let expected: Vec<f64> = w.matvec_t(&residual).iter().map(|&g| 0.3 * sign(g)).collect();
        let got = fgsm(&Ensemble::single(model), &x, label, &PerturbSpec::new(Method::Fgsm, 0.3, 0.0, 1)).unwrap();
        assert_eq!(got.delta, expected);
    }

    #[test]
    fn rfgsm_seeded_and_degenerate() {
        let ens = random_net(2);
        let x = [0.1, 0.2, 0.3];
        let spec = PerturbSpec::new(Method::Rfgsm, 0.3, 0.1, 1);
        let a = rfgsm(&ens, &x, 2, &spec, &mut rng(9)).unwrap();
        let b = rfgsm(&ens, &x, 2, &spec, &mut rng(9)).unwrap();
        assert_eq!(a, b);
        assert!(norm_inf(&a.delta) <= 0.3);
        let z = rfgsm(&ens, &x, 2, &PerturbSpec::new(Method::Rfgsm, 0.0, 0.1, 1), &mut rng(9)).unwrap();
        assert!(z.delta.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn pgd_single_step_equals_projected_fgsm_step() {
        let ens = random_net(3);
        let x = [0.5, -0.5, 0.25];
        let pgd = ldp_pgd(&ens, &x, 0, &PerturbSpec::new(Method::LdpPgd, 0.05, 0.08, 1), &mut rng(0)).unwrap();
        let f = fgsm(&ens, &x, 0, &PerturbSpec::new(Method::Fgsm, 0.08, 0.0, 1)).unwrap();
        assert_eq!(pgd.delta, project_linf(&f.delta, 0.05));
    }

    #[test]
    fn pgd_keeps_pushing_past_the_boundary() {
        // w > 0, true class 0 (the "−1" side): the loss grows monotonically with x.
        let ens = line1d(2.0, 0.0);
        for (k, eps, expected) in [(5, 10.0, 0.5), (40, 1.5, 1.5), (40, 10.0, 4.0)] {
            let spec = PerturbSpec::new(Method::LdpPgd, eps, 0.1, k);
            let r = ldp_pgd(&ens, &[-1.0], 0, &spec, &mut rng(0)).unwrap();
            let simulated = (0..k).fold(0.0_f64, |d, _| (d + 0.1).clamp(-eps, eps));
            assert!((r.delta[0] - simulated).abs() < 1e-12);
            assert!((r.delta[0] - expected).abs() < 1e-9);
        }
        let r = ldp_pgd(&ens, &[-1.0], 0, &PerturbSpec::new(Method::LdpPgd, 0.0, 0.1, 30), &mut rng(0)).unwrap();
        assert_eq!(r.delta, vec![0.0]);
    }

    #[test]
    fn udp_stops_at_the_entropy_peak() {
        let ens = line1d(2.0, 0.0);
        let spec = PerturbSpec::new(Method::UdpPgd, 2.0, 0.1, 40);
        let r = udp_pgd(&ens, &[-1.0], &spec, &mut rng(0)).unwrap();
        // dense grid maximiser of the entropy on [-3, 1]
        let grid_max = (0..=40_000)
            .map(|i| -3.0 + 4.0 * i as f64 / 40_000.0)
            .max_by(|a, b| {
                let ha = ens.entropy(&[*a]).unwrap();
                let hb = ens.entropy(&[*b]).unwrap();
                ha.partial_cmp(&hb).unwrap()
            })
            .unwrap();
        assert!(grid_max.abs() < 1e-3);
        let end = -1.0 + r.delta[0];
        assert!((end - grid_max).abs() <= 0.1 + 1e-9, "ended at {end}");
        assert_eq!(r.steps_taken, 40);
        assert_eq!(r.updates, 41);
    }

    #[test]
    fn udp_stationary_start() {
        let m = |s: f64| {
            MlpModel::from_layers(
                vec![Layer {
                    weights: Matrix::from_vec(2, 2, vec![s, 0.0, -s, 0.0]),
                    bias: vec![0.0, 0.0],
                }],
                Activation::Relu,
                0,
            )
            .unwrap()
        };
        let ens = Ensemble::new(vec![m(1.0), m(-1.0)]).unwrap();
        let r = udp_pgd(&ens, &[0.0, 0.0], &PerturbSpec::new(Method::UdpPgd, 1.0, 0.1, 10), &mut rng(0)).unwrap();
        assert_eq!(r.delta, vec![0.0, 0.0]);
    }

    #[test]
    fn udp_randomized_needs_two_steps() {
        let ens = random_net(4);
        let spec = PerturbSpec::new(Method::UdpPgd, 0.1, 0.01, 1).with_randomized_steps(true);
        assert!(matches!(udp_pgd(&ens, &[0.0; 3], &spec, &mut rng(0)), Err(Error::Config(_))));
        let spec = PerturbSpec::new(Method::UdpPgd, 0.1, 0.01, 2).with_randomized_steps(true);
        let r = udp_pgd(&ens, &[0.0; 3], &spec, &mut rng(0)).unwrap();
        assert_eq!(r.steps_taken, 1);
    }

    #[test]
    fn latent_split_zero_matches_input_search() {
        let mut m = MlpModel::new(&[2, 6, 2]).unwrap();
        m.init_params(8);
        let ens = Ensemble::single(m.clone());
        let x = [0.4, -0.1];
        let spec = PerturbSpec::new(Method::LdpPgd, 0.2, 0.05, 6);
        let a = ldp_pgd(&ens, &x, 1, &spec, &mut rng(1)).unwrap();
        let b = ldp_pgd(&ens, &x, 1, &spec.with_entry(Entry::Latent), &mut rng(1)).unwrap();
        assert_eq!(a, b);
        assert!(perturb_latent(&ens, &x, Some(1), &spec, &mut rng(1)).is_err());

        let split = Ensemble::single(m.with_encoder_split(1).unwrap());
        let r = perturb_latent(&split, &x, Some(1), &spec, &mut rng(1)).unwrap();
        assert_eq!(r.delta.len(), 6);
        assert!(norm_inf(&r.delta) <= 0.2);
    }

    #[test]
    fn method_mismatch_is_config_error() {
        let ens = random_net(5);
        let spec = PerturbSpec::new(Method::UdpPgd, 0.1, 0.01, 3);
        assert!(matches!(fgsm(&ens, &[0.0; 3], 0, &spec), Err(Error::Config(_))));
        assert!(perturb(&ens, &[0.0; 3], None, &PerturbSpec::new(Method::LdpPgd, 0.1, 0.01, 3), &mut rng(0)).is_err());
    }
}
