//! Experiment configuration: a single TOML file, deserialized with defaults
//! filled in and echoed back in resolved form next to the outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use udplab::data::defaults as dflt;
use udplab::data::{SynthKind, SynthSpec};
use udplab::objectives::{LrSchedule, TrainConfig, TrainObjective};
use udplab::{Entry, Method, OptimizerKind, PerturbSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ToyBoundary,
    EpsSweep,
    Oscillation,
    Histogram,
    Theorem1,
    LdpFailure,
    CapacitySweep,
    LatentLowdata,
    CatastrophicProbe,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ToyBoundary => "toy-boundary",
            ExperimentKind::EpsSweep => "eps-sweep",
            ExperimentKind::Oscillation => "oscillation",
            ExperimentKind::Histogram => "histogram",
            ExperimentKind::Theorem1 => "theorem1",
            ExperimentKind::LdpFailure => "ldp-failure",
            ExperimentKind::CapacitySweep => "capacity-sweep",
            ExperimentKind::LatentLowdata => "latent-lowdata",
            ExperimentKind::CatastrophicProbe => "catastrophic-probe",
        }
    }

    fn trains(self) -> bool {
        !matches!(
            self,
            ExperimentKind::Histogram | ExperimentKind::Theorem1 | ExperimentKind::LdpFailure
        )
    }
}

/// A training recipe named in `methods`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Standard,
    Fgsm,
    Rfgsm,
    LdpPgd,
    Trades,
    UdpPgd,
    Udpr,
}

impl MethodName {
    pub fn name(self) -> &'static str {
        match self {
            MethodName::Standard => "standard",
            MethodName::Fgsm => "fgsm",
            MethodName::Rfgsm => "rfgsm",
            MethodName::LdpPgd => "ldp-pgd",
            MethodName::Trades => "trades",
            MethodName::UdpPgd => "udp-pgd",
            MethodName::Udpr => "udpr",
        }
    }

    pub fn objective(self) -> TrainObjective {
        match self {
            MethodName::Standard => TrainObjective::Standard,
            MethodName::Trades => TrainObjective::Trades,
            MethodName::Udpr => TrainObjective::Udpr,
            _ => TrainObjective::ErmP,
        }
    }

    /// Engine behind the method; TRADES' inner search runs on the PGD settings.
    pub fn engine(self) -> Option<Method> {
        match self {
            MethodName::Standard => None,
            MethodName::Fgsm => Some(Method::Fgsm),
            MethodName::Rfgsm => Some(Method::Rfgsm),
            MethodName::LdpPgd | MethodName::Trades => Some(Method::LdpPgd),
            MethodName::UdpPgd | MethodName::Udpr => Some(Method::UdpPgd),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    NarrowCorridor {
        #[serde(default = "nc_gap_min")]
        gap_min: f64,
        #[serde(default = "nc_gap_max")]
        gap_max: f64,
        #[serde(default = "nc_stairs")]
        stairs: usize,
        #[serde(default = "nc_points")]
        points: usize,
        #[serde(default)]
        noise: f64,
    },
    Lms5 {
        #[serde(default = "lms_m_lin")]
        m_lin: f64,
        #[serde(default = "lms_m_slab")]
        m_slab: f64,
        #[serde(default = "lms_slab_width")]
        slab_width: f64,
        #[serde(default = "lms_x_extent")]
        x_extent: f64,
        #[serde(default = "lms_points")]
        points: usize,
        #[serde(default)]
        noise: f64,
    },
    TwoDistance {
        #[serde(default = "td_eps1")]
        eps1: f64,
        #[serde(default = "td_eps2")]
        eps2: f64,
        #[serde(default = "td_length")]
        cluster_length: f64,
        #[serde(default = "td_region_gap")]
        region_gap: f64,
        #[serde(default = "td_points")]
        points: usize,
        #[serde(default)]
        noise: f64,
    },
    Gauss1d {
        #[serde(default = "g_mu1")]
        mu1: f64,
        #[serde(default = "g_mu2")]
        mu2: f64,
        #[serde(default)]
        sigma: f64,
        #[serde(default = "g_points")]
        points: usize,
    },
    /// IDX image/label files; pixels are scaled to `[0, 1]`.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        #[serde(default)]
        test_images: Option<PathBuf>,
        #[serde(default)]
        test_labels: Option<PathBuf>,
        /// Keep this fraction of the training set (seeded).
        #[serde(default)]
        subsample: Option<f64>,
    },
}

fn nc_gap_min() -> f64 {
    dflt::NC_GAP_MIN
}
fn nc_gap_max() -> f64 {
    dflt::NC_GAP_MAX
}
fn nc_stairs() -> usize {
    dflt::NC_STAIRS
}
fn nc_points() -> usize {
    dflt::NC_POINTS_PER_CHAIN
}
fn lms_m_lin() -> f64 {
    dflt::LMS_M_LIN
}
fn lms_m_slab() -> f64 {
    dflt::LMS_M_SLAB
}
fn lms_slab_width() -> f64 {
    dflt::LMS_SLAB_WIDTH
}
fn lms_x_extent() -> f64 {
    dflt::LMS_X_EXTENT
}
fn lms_points() -> usize {
    dflt::LMS_POINTS_PER_CLASS
}
fn td_eps1() -> f64 {
    dflt::TWO_DIST_EPS1
}
fn td_eps2() -> f64 {
    dflt::TWO_DIST_EPS2
}
fn td_length() -> f64 {
    dflt::TWO_DIST_CLUSTER_LENGTH
}
fn td_region_gap() -> f64 {
    dflt::TWO_DIST_REGION_GAP
}
fn td_points() -> usize {
    dflt::TWO_DIST_POINTS_PER_CLUSTER
}
fn g_mu1() -> f64 {
    dflt::GAUSS_MU1
}
fn g_mu2() -> f64 {
    dflt::GAUSS_MU2
}
fn g_points() -> usize {
    SynthKind::gauss1d().default_count()
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::NarrowCorridor {
            gap_min: nc_gap_min(),
            gap_max: nc_gap_max(),
            stairs: nc_stairs(),
            points: nc_points(),
            noise: 0.0,
        }
    }
}

impl DatasetConfig {
    pub fn two_distance() -> Self {
        DatasetConfig::TwoDistance {
            eps1: td_eps1(),
            eps2: td_eps2(),
            cluster_length: td_length(),
            region_gap: td_region_gap(),
            points: td_points(),
            noise: 0.0,
        }
    }

    /// Generator spec for the synthetic kinds, `None` for IDX.
    pub fn synth(&self, seed: u64) -> Option<SynthSpec> {
        let (kind, points, noise) = match *self {
            DatasetConfig::NarrowCorridor {
                gap_min,
                gap_max,
                stairs,
                points,
                noise,
            } => (SynthKind::NarrowCorridor { gap_min, gap_max, stairs }, points, noise),
            DatasetConfig::Lms5 {
                m_lin,
                m_slab,
                slab_width,
                x_extent,
                points,
                noise,
            } => (
                SynthKind::Lms5 {
                    m_lin,
                    m_slab,
                    slab_width,
                    x_extent,
                },
                points,
                noise,
            ),
            DatasetConfig::TwoDistance {
                eps1,
                eps2,
                cluster_length,
                region_gap,
                points,
                noise,
            } => (
                SynthKind::TwoDistance {
                    eps1,
                    eps2,
                    cluster_length,
                    region_gap,
                },
                points,
                noise,
            ),
            DatasetConfig::Gauss1d { mu1, mu2, sigma, points } => (SynthKind::Gauss1d { mu1, mu2, sigma }, points, 0.0),
            DatasetConfig::Idx { .. } => return None,
        };
        Some(SynthSpec::new(kind, seed).with_points(points).with_noise(noise))
    }

    pub fn is_narrow_corridor(&self) -> bool {
        matches!(self, DatasetConfig::NarrowCorridor { .. })
    }

    fn violations(&self, v: &mut Vec<String>) {
        match self {
            DatasetConfig::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                subsample,
            } => {
                for (field, path) in [("train_images", Some(train_images)), ("train_labels", Some(train_labels))]
                    .into_iter()
                    .chain([("test_images", test_images.as_ref()), ("test_labels", test_labels.as_ref())])
                {
                    if let Some(p) = path {
                        if !p.is_file() {
                            v.push(format!("dataset.{field}: file {} does not exist", p.display()));
                        }
                    }
                }
                if test_images.is_some() != test_labels.is_some() {
                    v.push("dataset.test_images: test images and labels must be given together".into());
                }
                if let Some(f) = subsample {
                    if !(*f > 0.0 && *f <= 1.0) {
                        v.push(format!("dataset.subsample: fraction must lie in (0, 1], got {f}"));
                    }
                }
            }
            synth => {
                let spec = synth.synth(0).expect("synthetic dataset");
                v.extend(spec.violations().into_iter().map(|m| format!("dataset: {m}")));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Hidden widths; input and output widths come from the data.
    pub hidden: Vec<usize>,
    pub members: usize,
    /// Number of layers forming the encoder (0 = identity encoder).
    pub encoder_split: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            members: 1,
            encoder_split: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerName {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleName {
    Constant,
    LinearRamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerName,
    pub learning_rate: f64,
    pub schedule: ScheduleName,
    /// Steps of the linear warm-up when `schedule = "linear-ramp"`.
    pub ramp_steps: usize,
    /// Regularizer weight of trades and udpr.
    pub lambda: f64,
    pub checkpoint_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 32,
            optimizer: OptimizerName::Sgd,
            learning_rate: 0.1,
            schedule: ScheduleName::Constant,
            ramp_steps: 100,
            lambda: 0.5,
            checkpoint_every: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryName {
    Input,
    Latent,
}

/// Perturbation settings shared by every perturbed method of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbSection {
    pub epsilon: f64,
    pub alpha: f64,
    pub steps: usize,
    /// udp-pgd and udpr only: draw the step count from `{1..steps-1}`.
    pub randomize_steps: bool,
    pub random_start: bool,
    pub entry: EntryName,
}

impl Default for PerturbSection {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            alpha: 0.05,
            steps: 10,
            randomize_steps: true,
            random_start: false,
            entry: EntryName::Input,
        }
    }
}

impl PerturbSection {
    pub fn spec(&self, method: MethodName, epsilon: f64) -> Option<PerturbSpec> {
        let engine = method.engine()?;
        let udp = engine == Method::UdpPgd;
        let entry = match self.entry {
            EntryName::Input => Entry::Input,
            EntryName::Latent => Entry::Latent,
        };
        let mut spec = PerturbSpec::new(engine, epsilon, self.alpha, self.steps)
            .with_randomized_steps(udp && self.randomize_steps)
            .with_entry(entry);
        if engine != Method::Rfgsm {
            spec = spec.with_random_start(self.random_start);
        }
        Some(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// Grid resolution per axis for decision-boundary and oscillation maps.
    pub grid: usize,
    /// Padding around the data's bounding box.
    pub pad: f64,
    pub margin_directions: usize,
    pub margin_radius: f64,
    /// Half-width of the band around the best vertical line (vertical-fraction statistic).
    pub vertical_band: f64,
    /// Corridor positions below this fraction count as the narrow region.
    pub narrow_fraction: f64,
    /// Attack used for robust accuracy (PGD by default).
    pub attack_epsilon: f64,
    pub attack_alpha: f64,
    pub attack_steps: usize,
    /// catastrophic-probe: held-out samples the attack is evaluated on at each checkpoint.
    pub probe_samples: usize,
    pub histogram_bins: usize,
    pub svg: bool,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            grid: 100,
            pad: 0.15,
            margin_directions: 64,
            margin_radius: 2.0,
            vertical_band: 0.1,
            narrow_fraction: 0.25,
            attack_epsilon: 0.2,
            attack_alpha: 0.01,
            attack_steps: 20,
            probe_samples: 1000,
            histogram_bins: 30,
            svg: true,
        }
    }
}

impl AnalysisSection {
    pub fn attack(&self) -> PerturbSpec {
        PerturbSpec::new(Method::LdpPgd, self.attack_epsilon, self.attack_alpha, self.attack_steps)
    }
}

/// Lists swept by the sweep experiments and the replica count of every experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub replicas: usize,
    pub epsilons: Vec<f64>,
    /// Width multipliers for capacity-sweep.
    pub multipliers: Vec<usize>,
    /// Training-set fractions for latent-lowdata.
    pub fractions: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            replicas: 5,
            epsilons: vec![0.05, 0.15, 0.25, 0.35, 0.45],
            multipliers: vec![2, 4, 6, 8, 10, 12],
            fractions: vec![0.05, 0.1, 0.25],
        }
    }
}

/// One-dimensional simulator settings (theorem1, ldp-failure).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearSimSection {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma: f64,
    pub etas: Vec<f64>,
    pub omega0: f64,
    pub steps: usize,
    pub replicas: usize,
    /// Error level below which trajectory steps are excluded from the rate fit.
    pub fit_floor: f64,
    /// Boundary position and step size of the one-step conditional-mean check.
    pub check_omega: f64,
    pub check_eta: f64,
    pub draws: usize,
    /// ldp-failure: push radius, step size, start and per-seed step count.
    pub ldp_epsilon: f64,
    pub ldp_eta: f64,
    pub ldp_omega0: f64,
    pub ldp_steps: usize,
}

impl Default for LinearSimSection {
    fn default() -> Self {
        Self {
            mu1: -1.0,
            mu2: 1.0,
            sigma: 0.0,
            etas: vec![0.1, 0.5, 1.0],
            omega0: 1.0e4,
            steps: 60,
            replicas: 10_000,
            fit_floor: 50.0,
            check_omega: 2.0,
            check_eta: 1.0,
            draws: 1_000_000,
            ldp_epsilon: 1.2,
            ldp_eta: 0.001,
            ldp_omega0: 0.5,
            ldp_steps: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Methods to train; empty selects the experiment's default menu.
    #[serde(default)]
    pub methods: Vec<MethodName>,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub perturb: PerturbSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub linearsim: LinearSimSection,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        let mut cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.fill_defaults();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn fill_defaults(&mut self) {
        if self.methods.is_empty() {
            self.methods = default_methods(self.experiment);
        }
    }

    /// Every violation, prefixed with the offending field path. Empty iff `run` would start.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.out.as_os_str().is_empty() {
            v.push("out: output directory must not be empty".into());
        } else if let Some(bad) = existing_non_dir(&self.out) {
            v.push(format!("out: {} exists and is not a directory", bad.display()));
        }
        self.dataset.violations(&mut v);
        let trains = self.experiment.trains();
        match self.experiment {
            ExperimentKind::ToyBoundary | ExperimentKind::EpsSweep | ExperimentKind::Oscillation => {
                if matches!(self.dataset, DatasetConfig::Idx { .. } | DatasetConfig::Gauss1d { .. }) {
                    v.push(format!("dataset.kind: {} needs a two-dimensional synthetic dataset", self.experiment.name()));
                }
            }
            ExperimentKind::CatastrophicProbe | ExperimentKind::CapacitySweep | ExperimentKind::LatentLowdata => {}
            _ => {}
        }
        if trains {
            if self.model.members == 0 {
                v.push("model.members: an ensemble needs at least one member".into());
            }
            if self.model.hidden.iter().any(|&w| w == 0) {
                v.push("model.hidden: widths must be positive".into());
            }
            if self.model.encoder_split > self.model.hidden.len() {
                v.push(format!(
                    "model.encoder_split: {} exceeds the number of hidden layers ({})",
                    self.model.encoder_split,
                    self.model.hidden.len()
                ));
            }
            if self.sweep.replicas == 0 {
                v.push("sweep.replicas: must be >= 1".into());
            }
            let eps_list: Vec<f64> = match self.experiment {
                ExperimentKind::EpsSweep => self.sweep.epsilons.clone(),
                _ => vec![self.perturb.epsilon],
            };
            if eps_list.is_empty() {
                v.push("sweep.epsilons: needs at least one value".into());
            }
            for &method in &self.methods {
                for &eps in &eps_list {
                    for m in self.train_config(method, eps, 0, None).violations() {
                        let line = format!("{} (method {})", field_path(&m), method.name());
                        if !v.contains(&line) {
                            v.push(line);
                        }
                    }
                }
            }
            if self.perturb.entry == EntryName::Latent && self.model.encoder_split == 0 {
                v.push("perturb.entry: latent perturbations need model.encoder_split > 0".into());
            }
            for m in self.analysis.attack().violations() {
                let field = m.split_whitespace().next().unwrap_or("").replace("max_", "");
                v.push(format!("analysis.attack_{field}: {m}"));
            }
        }
        match self.experiment {
            ExperimentKind::CapacitySweep if self.sweep.multipliers.iter().any(|&m| m == 0) || self.sweep.multipliers.is_empty() => {
                v.push("sweep.multipliers: needs positive width multipliers".into());
            }
            ExperimentKind::LatentLowdata => {
                if self.sweep.fractions.is_empty() || self.sweep.fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
                    v.push("sweep.fractions: fractions must lie in (0, 1]".into());
                }
                if self.model.encoder_split == 0 {
                    v.push("model.encoder_split: latent-lowdata needs an encoder split > 0".into());
                }
            }
            ExperimentKind::Theorem1 | ExperimentKind::LdpFailure => self.linearsim_violations(&mut v),
            _ => {}
        }
        let a = &self.analysis;
        if a.grid < 2 {
            v.push("analysis.grid: needs at least 2 cells per axis".into());
        }
        if !(a.pad >= 0.0) {
            v.push("analysis.pad: must be >= 0".into());
        }
        if a.margin_directions == 0 || !(a.margin_radius > 0.0) {
            v.push("analysis.margin_directions: margin search needs directions and a positive radius".into());
        }
        if !(a.vertical_band > 0.0) {
            v.push("analysis.vertical_band: must be positive".into());
        }
        if !(a.narrow_fraction > 0.0 && a.narrow_fraction <= 1.0) {
            v.push("analysis.narrow_fraction: must lie in (0, 1]".into());
        }
        if a.histogram_bins == 0 {
            v.push("analysis.histogram_bins: must be >= 1".into());
        }
        if self.analysis.probe_samples == 0 {
            v.push("analysis.probe_samples: must be >= 1".into());
        }
        v
    }

    fn linearsim_violations(&self, v: &mut Vec<String>) {
        let s = &self.linearsim;
        if !(s.mu1 < s.mu2) {
            v.push(format!("linearsim.mu1: must be smaller than mu2 ({} vs {})", s.mu1, s.mu2));
        }
        if !(s.sigma >= 0.0) {
            v.push("linearsim.sigma: must be >= 0".into());
        }
        let etas = if self.experiment == ExperimentKind::Theorem1 {
            let mut e = s.etas.clone();
            e.push(s.check_eta);
            e
        } else {
            vec![s.ldp_eta]
        };
        if etas.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            v.push("linearsim.etas: step sizes must lie in (0, 1]".into());
        }
        if s.steps == 0 || s.replicas == 0 || s.draws == 0 || s.ldp_steps == 0 {
            v.push("linearsim.steps: steps, replicas, draws and ldp_steps must be >= 1".into());
        }
        if !(s.ldp_epsilon >= 0.0) {
            v.push("linearsim.ldp_epsilon: must be >= 0".into());
        }
        if self.sweep.replicas == 0 {
            v.push("sweep.replicas: must be >= 1".into());
        }
    }

    /// Training recipe for `method` at radius `epsilon` with seed `seed`.
    pub fn train_config(&self, method: MethodName, epsilon: f64, seed: u64, probe: Option<PerturbSpec>) -> TrainConfig {
        let t = &self.train;
        let optimizer = match t.optimizer {
            OptimizerName::Sgd => OptimizerKind::Sgd,
            OptimizerName::Adam => OptimizerKind::adam(),
        };
        let mut cfg = TrainConfig::standard(t.epochs, t.batch_size, t.learning_rate, seed)
            .with_optimizer(optimizer)
            .with_objective(method.objective(), self.perturb.spec(method, epsilon))
            .with_lambda(t.lambda);
        cfg.schedule = match t.schedule {
            ScheduleName::Constant => LrSchedule::Constant,
            ScheduleName::LinearRamp => LrSchedule::LinearRamp { steps: t.ramp_steps },
        };
        cfg.checkpoint_every = t.checkpoint_every;
        cfg.probe = probe;
        cfg
    }
}

/// Prefixes a training-recipe violation with the config field it came from.
fn field_path(message: &str) -> String {
    let (section, rest) = match message.strip_prefix("perturb: ") {
        Some(rest) => ("perturb", rest),
        None => ("train", message),
    };
    let field = match rest.split_whitespace().next().unwrap_or("") {
        "linear" => "ramp_steps",
        "max_steps" => "steps",
        "udpr" | "objective" => return format!("methods: {rest}"),
        f => f,
    };
    format!("{section}.{field}: {rest}")
}

fn existing_non_dir(path: &Path) -> Option<PathBuf> {
    path.ancestors()
        .find(|p| !p.as_os_str().is_empty() && p.exists())
        .filter(|p| !p.is_dir())
        .map(Path::to_path_buf)
}

pub fn default_methods(kind: ExperimentKind) -> Vec<MethodName> {
    use MethodName::*;
    match kind {
        ExperimentKind::ToyBoundary => vec![Standard, LdpPgd, Trades, UdpPgd, Udpr],
        ExperimentKind::EpsSweep => vec![LdpPgd, Trades, Udpr],
        ExperimentKind::Oscillation => vec![LdpPgd, UdpPgd],
        ExperimentKind::CapacitySweep => vec![Standard, LdpPgd, UdpPgd],
        ExperimentKind::LatentLowdata => vec![Standard, UdpPgd],
        ExperimentKind::CatastrophicProbe => vec![Fgsm, UdpPgd],
        ExperimentKind::Histogram | ExperimentKind::Theorem1 | ExperimentKind::LdpFailure => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_is_valid() {
        let cfg = ExperimentConfig::from_toml("experiment = \"toy-boundary\"\nout = \"/tmp/udplab-cfg-test\"").unwrap();
        assert_eq!(cfg.validate(), Vec::<String>::new());
        assert_eq!(cfg.methods.len(), 5);
    }

    #[test]
    fn trades_lambda_out_of_range_names_the_bound() {
        let cfg = ExperimentConfig::from_toml(
            "experiment = \"toy-boundary\"\nmethods = [\"trades\"]\n[train]\nlambda = 1.5",
        )
        .unwrap();
        let v = cfg.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].starts_with("train.lambda") && v[0].contains("(0, 1)"), "{v:?}");
    }

    #[test]
    fn randomized_steps_with_one_step_is_rejected() {
        let cfg = ExperimentConfig::from_toml(
            "experiment = \"toy-boundary\"\nmethods = [\"udp-pgd\"]\n[perturb]\nsteps = 1\nrandomize_steps = true",
        )
        .unwrap();
        let v = cfg.validate();
        assert!(v.iter().any(|m| m.starts_with("perturb.randomize_steps")), "{v:?}");
    }

    #[test]
    fn all_violations_reported_together() {
        let cfg = ExperimentConfig::from_toml(
            "experiment = \"toy-boundary\"\nmethods = [\"trades\"]\n[train]\nlambda = 2.0\nbatch_size = 0\n[analysis]\ngrid = 1",
        )
        .unwrap();
        assert!(cfg.validate().len() >= 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("experiment = \"toy-boundary\"\n[train]\nepoch = 3").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = ExperimentConfig::from_toml("experiment = \"eps-sweep\"\n[dataset]\nkind = \"lms5\"").unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }
}
