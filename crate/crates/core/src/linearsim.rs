//! One-dimensional oracle model of boundary training on a two-component
//! mixture.
//!
//! The boundary `ω` moves toward a point `ω̃` drawn between the two
//! (perturbed) samples: `ω ← ω + η(ω̃ − ω)`. Under the UDP law each sample is
//! pulled a uniform fraction of the way toward the current boundary, which
//! gives `E[ω₊ | ω] = (1 − η/2)ω + (η/2)ω*` with `ω* = (μ1 + μ2)/2`. The LDP
//! law pushes each sample a fixed `ε` toward the other class instead, and for
//! `ε > (μ2 − μ1)/2` the perturbed samples swap sides.
//!
//! Besides `ω` the state tracks an orientation `w ∈ [−1, 1]` estimating which
//! side of the boundary the `+1` class lies on. It follows the same step rule,
//! with target `sign(x̃² − x̃¹)`, and is what makes label flips visible as an
//! accuracy loss.

use std::fmt::Write as _;

use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::linalg::sign;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleState {
    pub omega: f64,
    /// Side of `ω` assigned to the `+1` class: predict `+1` iff `w·(x − ω) > 0`.
    pub orientation: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub sigma: f64,
    pub eta: f64,
    pub seed: u64,
}

impl OracleState {
    pub fn new(omega: f64, mu1: f64, mu2: f64, sigma: f64, eta: f64, seed: u64) -> Result<Self> {
        let s = Self {
            omega,
            orientation: 1.0,
            mu1,
            mu2,
            sigma,
            eta,
            seed,
        };
        let v = s.violations();
        if v.is_empty() {
            Ok(s)
        } else {
            Err(Error::config(v.join("; ")))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.mu1 < self.mu2) {
            v.push(format!("mu1 < mu2 required, got {} and {}", self.mu1, self.mu2));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            v.push(format!("sigma must be finite and >= 0, got {}", self.sigma));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            v.push(format!("eta must lie in (0, 1], got {}", self.eta));
        }
        if !self.omega.is_finite() {
            v.push(format!("omega must be finite, got {}", self.omega));
        }
        v
    }

    pub fn omega_star(&self) -> f64 {
        0.5 * (self.mu1 + self.mu2)
    }

    pub fn with_omega(self, omega: f64) -> Self {
        Self { omega, ..self }
    }

    /// `+1` or `−1`.
    pub fn classify(&self, x: f64) -> i8 {
        if self.orientation * (x - self.omega) > 0.0 {
            1
        } else {
            -1
        }
    }

    /// Accuracy on the two clean means (`μ1` labelled −1, `μ2` labelled +1).
    pub fn accuracy_on_means(&self) -> f64 {
        let hits = (self.classify(self.mu1) == -1) as u8 + (self.classify(self.mu2) == 1) as u8;
        hits as f64 / 2.0
    }

    fn draw_samples<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        if self.sigma == 0.0 {
            return (self.mu1, self.mu2);
        }
        let n = Normal::new(0.0, self.sigma).expect("validated sigma");
        (self.mu1 + n.sample(rng), self.mu2 + n.sample(rng))
    }
}

/// Everything drawn in one step. LDP steps record `β = γ = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub x1: f64,
    pub x2: f64,
    pub x1_tilde: f64,
    pub x2_tilde: f64,
    pub beta: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub omega_tilde: f64,
    pub omega_next: f64,
}

fn finish<R: Rng + ?Sized>(
    state: &OracleState,
    (x1, x2): (f64, f64),
    (x1_tilde, x2_tilde): (f64, f64),
    (beta, gamma): (f64, f64),
    rng: &mut R,
) -> (OracleState, StepRecord) {
    let alpha: f64 = rng.sample(Open01);
    let omega_tilde = alpha * x1_tilde + (1.0 - alpha) * x2_tilde;
    let omega_next = state.omega + state.eta * (omega_tilde - state.omega);
    let target = sign(x2_tilde - x1_tilde);
    let orientation = state.orientation + state.eta * (target - state.orientation);
    let next = OracleState {
        omega: omega_next,
        orientation,
        ..*state
    };
    let rec = StepRecord {
        x1,
        x2,
        x1_tilde,
        x2_tilde,
        beta,
        gamma,
        alpha,
        omega_tilde,
        omega_next,
    };
    (next, rec)
}

/// UDP law: `x̃ = βx + (1 − β)ω` for each sample with independent `β, γ ~ U(0, 1)`.
pub fn udp_step<R: Rng + ?Sized>(state: &OracleState, rng: &mut R) -> (OracleState, StepRecord) {
    udp_step_in_ball(state, f64::INFINITY, rng)
}

/// UDP law with each displacement clipped to `[−ε, ε]`.
pub fn udp_step_in_ball<R: Rng + ?Sized>(state: &OracleState, epsilon: f64, rng: &mut R) -> (OracleState, StepRecord) {
    let (x1, x2) = state.draw_samples(rng);
    let beta: f64 = rng.sample(Open01);
    let gamma: f64 = rng.sample(Open01);
    let pull = |x: f64, frac: f64| x + ((1.0 - frac) * (state.omega - x)).clamp(-epsilon, epsilon);
    let tilde = (pull(x1, beta), pull(x2, gamma));
    finish(state, (x1, x2), tilde, (beta, gamma), rng)
}

/// LDP law: `x̃¹ = x¹ + ε`, `x̃² = x² − ε`.
pub fn ldp_step<R: Rng + ?Sized>(state: &OracleState, epsilon: f64, rng: &mut R) -> (OracleState, StepRecord) {
    let (x1, x2) = state.draw_samples(rng);
    finish(state, (x1, x2), (x1 + epsilon, x2 - epsilon), (1.0, 1.0), rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dynamics {
    Udp,
    UdpInBall { epsilon: f64 },
    Ldp { epsilon: f64 },
}

impl Dynamics {
    pub fn step<R: Rng + ?Sized>(self, state: &OracleState, rng: &mut R) -> (OracleState, StepRecord) {
        match self {
            Dynamics::Udp => udp_step(state, rng),
            Dynamics::UdpInBall { epsilon } => udp_step_in_ball(state, epsilon, rng),
            Dynamics::Ldp { epsilon } => ldp_step(state, epsilon, rng),
        }
    }

    fn check(self) -> Result<()> {
        match self {
            Dynamics::Udp => Ok(()),
            Dynamics::UdpInBall { epsilon } | Dynamics::Ldp { epsilon } if epsilon >= 0.0 => Ok(()),
            Dynamics::UdpInBall { epsilon } | Dynamics::Ldp { epsilon } => {
                Err(Error::config(format!("epsilon must be >= 0, got {epsilon}")))
            }
        }
    }
}

/// RNG stream of replica `r` of a chain started from `state`.
pub fn replica_rng(state: &OracleState, replica: usize) -> rand_chacha::ChaCha8Rng {
    seed::stream(seed::derive_named(state.seed, "linearsim", &[replica as u64]))
}

/// Runs one replica for `steps` steps and returns every state (`steps + 1` entries).
pub fn trajectory(state: &OracleState, dynamics: Dynamics, steps: usize, replica: usize) -> Vec<OracleState> {
    let mut rng = replica_rng(state, replica);
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = *state;
    out.push(s);
    for _ in 0..steps {
        s = dynamics.step(&s, &mut rng).0;
        out.push(s);
    }
    out
}

/// Per-step statistics across replicas; index 0 is the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStats {
    pub mean_omega: Vec<f64>,
    pub std_omega: Vec<f64>,
    pub mean_abs_err: Vec<f64>,
    /// Final states of every replica, in replica order.
    pub finals: Vec<OracleState>,
}

impl ChainStats {
    /// Header `step,mean_omega,std_omega,mean_abs_err`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,mean_omega,std_omega,mean_abs_err\n");
        for n in 0..self.mean_omega.len() {
            let _ = writeln!(
                s,
                "{n},{},{},{}",
                self.mean_omega[n], self.std_omega[n], self.mean_abs_err[n]
            );
        }
        s
    }
}

/// Independent seeded replicas, reduced in replica order.
pub fn run_chain(state: &OracleState, dynamics: Dynamics, steps: usize, replicas: usize) -> Result<ChainStats> {
    let v = state.violations();
    if !v.is_empty() {
        return Err(Error::config(v.join("; ")));
    }
    dynamics.check()?;
    if steps == 0 || replicas == 0 {
        return Err(Error::config("run_chain needs steps >= 1 and replicas >= 1"));
    }
    let star = state.omega_star();
    let paths = map_indexed(replicas, |r| trajectory(state, dynamics, steps, r));
    let mut sum = vec![0.0; steps + 1];
    let mut sum_sq = vec![0.0; steps + 1];
    let mut sum_abs = vec![0.0; steps + 1];
    for path in &paths {
        for (n, s) in path.iter().enumerate() {
            sum[n] += s.omega;
            sum_abs[n] += (s.omega - star).abs();
        }
    }
    let count = replicas as f64;
    let mean_omega: Vec<f64> = sum.iter().map(|s| s / count).collect();
    for path in &paths {
        for (n, s) in path.iter().enumerate() {
            sum_sq[n] += (s.omega - mean_omega[n]).powi(2);
        }
    }
    let std_omega = sum_sq
        .iter()
        .map(|s| if replicas > 1 { (s / (count - 1.0)).sqrt() } else { 0.0 })
        .collect();
    Ok(ChainStats {
        mean_omega,
        std_omega,
        mean_abs_err: sum_abs.iter().map(|s| s / count).collect(),
        finals: paths.iter().map(|p| *p.last().expect("non-empty path")).collect(),
    })
}

/// Monte-Carlo mean and standard error of `ω₊` from a fixed state.
pub fn conditional_mean(state: &OracleState, dynamics: Dynamics, draws: usize) -> Result<(f64, f64)> {
    dynamics.check()?;
    if draws < 2 {
        return Err(Error::config("conditional_mean needs at least 2 draws"));
    }
    const CHUNK: usize = 4096;
    let chunks = draws.div_ceil(CHUNK);
    let parts = map_indexed(chunks, |c| {
        let mut rng = replica_rng(state, c);
        let n = CHUNK.min(draws - c * CHUNK);
        let mut acc = (0.0, 0.0);
        for _ in 0..n {
            let w = dynamics.step(state, &mut rng).0.omega;
            acc.0 += w;
            acc.1 += w * w;
        }
        acc
    });
    let (s, s2) = parts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let n = draws as f64;
    let mean = s / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

/// Least-squares fit of `ln mean_abs_err[n] ≈ a + n·ln ρ` over the steps whose
/// error exceeds `floor`; returns `ρ`.
pub fn fit_contraction_rate(stats: &ChainStats, floor: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = stats
        .mean_abs_err
        .iter()
        .enumerate()
        .take_while(|(_, &e)| e > floor)
        .map(|(n, &e)| (n as f64, e.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::domain(format!(
            "only {} steps above the fit floor {floor}; start further away",
            pts.len()
        )));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok((sxy / sxx).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(omega: f64, eta: f64) -> OracleState {
        OracleState::new(omega, -1.0, 1.0, 0.0, eta, 7).unwrap()
    }

    #[test]
    fn rejects_bad_states() {
        assert!(OracleState::new(0.0, 1.0, -1.0, 0.0, 0.5, 0).is_err());
        assert!(OracleState::new(0.0, -1.0, 1.0, 0.0, 0.0, 0).is_err());
        assert!(OracleState::new(0.0, -1.0, 1.0, 0.0, 1.5, 0).is_err());
        assert!(OracleState::new(0.0, -1.0, 1.0, -0.1, 0.5, 0).is_err());
        assert!(OracleState::new(0.0, -1.0, 1.0, 0.0, 1.0, 0).is_ok());
    }

    #[test]
    fn udp_record_betweenness() {
        let mut s = OracleState::new(3.0, -1.0, 2.0, 0.7, 0.3, 1).unwrap();
        let mut rng = replica_rng(&s, 0);
        for _ in 0..2000 {
            let (next, r) = udp_step(&s, &mut rng);
            let within = |v: f64, a: f64, b: f64| a.min(b) <= v && v <= a.max(b);
            assert!(within(r.x1_tilde, r.x1, s.omega) && within(r.x2_tilde, r.x2, s.omega));
            assert!(within(r.omega_tilde, r.x1_tilde, r.x2_tilde));
            for u in [r.alpha, r.beta, r.gamma] {
                assert!(u > 0.0 && u < 1.0);
            }
            assert_eq!(next.omega, r.omega_next);
            s = next;
        }
    }

    #[test]
    fn ldp_swaps_sides_beyond_half_gap() {
        let s = base(0.0, 0.5);
        let (_, r) = ldp_step(&s, 1.2, &mut replica_rng(&s, 0));
        assert!(r.x1_tilde > s.omega_star() && s.omega_star() > r.x2_tilde);
        assert!((r.x1_tilde - 0.2).abs() < 1e-15 && (r.x2_tilde + 0.2).abs() < 1e-15);
    }

    #[test]
    fn ball_clip_limits_displacement() {
        let s = base(10.0, 0.5);
        let mut rng = replica_rng(&s, 3);
        for _ in 0..500 {
            let (_, r) = udp_step_in_ball(&s, 0.3, &mut rng);
            assert!((r.x1_tilde - r.x1).abs() <= 0.3 + 1e-15 && (r.x2_tilde - r.x2).abs() <= 0.3 + 1e-15);
        }
    }

    #[test]
    fn single_replica_is_reproducible() {
        let s = base(2.0, 0.2);
        let a = run_chain(&s, Dynamics::Udp, 50, 1).unwrap();
        let b = run_chain(&s, Dynamics::Udp, 50, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.std_omega, vec![0.0; 51]);
    }

    #[test]
    fn fixed_point_holds_in_expectation() {
        let s = base(0.0, 0.5);
        let (m, se) = conditional_mean(&s, Dynamics::Udp, 200_000).unwrap();
        assert!(m.abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn affine_shift_moves_stats_by_c() {
        let c = 3.5;
        let s = OracleState::new(1.7, -1.0, 1.0, 0.4, 0.3, 11).unwrap();
        let t = OracleState {
            omega: s.omega + c,
            mu1: s.mu1 + c,
            mu2: s.mu2 + c,
            ..s
        };
        let a = run_chain(&s, Dynamics::Udp, 40, 64).unwrap();
        let b = run_chain(&t, Dynamics::Udp, 40, 64).unwrap();
        for n in 0..=40 {
            assert!((b.mean_omega[n] - a.mean_omega[n] - c).abs() < 1e-9);
            assert!((b.std_omega[n] - a.std_omega[n]).abs() < 1e-9);
            assert!((b.mean_abs_err[n] - a.mean_abs_err[n]).abs() < 1e-9);
        }
    }

    #[test]
    fn fit_recovers_exact_geometric_decay() {
        let e: Vec<f64> = (0..30).map(|n| 5.0 * 0.8f64.powi(n)).collect();
        let stats = ChainStats {
            mean_omega: e.clone(),
            std_omega: vec![0.0; 30],
            mean_abs_err: e,
            finals: vec![],
        };
        assert!((fit_contraction_rate(&stats, 1e-3).unwrap() - 0.8).abs() < 1e-12);
        assert!(fit_contraction_rate(&stats, 10.0).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let stats = run_chain(&base(1.0, 0.5), Dynamics::Udp, 3, 4).unwrap();
        let csv = stats.to_csv();
        assert!(csv.starts_with("step,mean_omega,std_omega,mean_abs_err\n"));
        assert_eq!(csv.lines().count(), 5);
    }
}
