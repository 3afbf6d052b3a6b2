//! Experiment configuration: one TOML file, every section optional, unknown
//! keys rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use wigner_core::network::Activation;
use wigner_core::oracle::AnalyticSolution;
use wigner_core::phase::{validate_config, PhysicalConstants, RunConfig};
use wigner_core::potentials::FdSteps;
use wigner_core::pushforward::{InitialDecomposition, NetworkShape};
use wigner_core::residual::TimeSampling;
use wigner_core::testfuncs::TestScales;
use wigner_core::trainer::{LrDecay, TrainOptions};
use wigner_core::LibraryPotential;

use crate::error::CliError;

const PRESETS: &[(&str, &str)] = &[
    (
        "harmonic-coherent-1d",
        include_str!("../presets/harmonic-coherent-1d.toml"),
    ),
    ("free-1d", include_str!("../presets/free-1d.toml")),
    (
        "harmonic-frozen-1d",
        include_str!("../presets/harmonic-frozen-1d.toml"),
    ),
    (
        "first-excited-1d",
        include_str!("../presets/first-excited-1d.toml"),
    ),
    (
        "quartic-oracle-1d",
        include_str!("../presets/quartic-oracle-1d.toml"),
    ),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(name, _)| *name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub physics: PhysicsConfig,
    pub potential: PotentialConfig,
    pub initial: InitialConfig,
    pub run: RunSection,
    pub network: NetworkConfig,
    pub test_functions: TestFunctionConfig,
    pub residual: ResidualConfig,
    pub train: TrainSection,
    pub evaluate: EvaluateConfig,
    pub oracle: OracleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub hbar: f64,
    pub mass: f64,
    pub dim: usize,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
            dim: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialConfig {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self {
            name: "harmonic".into(),
            params: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateName {
    Coherent,
    FirstExcited,
}

/// Initial Wigner function. Coherent states take their widths from `omega`
/// together with the physical mass and `hbar`; empty centers mean the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub state: StateName,
    pub center_x: Vec<f64>,
    pub center_p: Vec<f64>,
    pub omega: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            state: StateName::Coherent,
            center_x: Vec::new(),
            center_p: Vec::new(),
            omega: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub horizon: f64,
    pub batch_size: usize,
    pub num_test: usize,
    pub n_adv: usize,
    pub lr_gen: f64,
    pub lr_adv: f64,
    pub epochs: usize,
    /// Cosine-anneal the generator rate to this value over `epochs`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_gen_final: Option<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        let run = RunConfig::<f64>::default();
        Self {
            horizon: run.horizon,
            batch_size: run.batch_size,
            num_test: run.num_test,
            n_adv: run.n_adv,
            lr_gen: run.lr_gen,
            lr_adv: run.lr_adv,
            epochs: 100,
            lr_gen_final: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationName {
    Tanh,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub activation: ActivationName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_dim: Option<usize>,
    /// Unset: frozen exactly when the initial data is non-negative.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freeze_alpha: Option<bool>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let shape = NetworkShape::default();
        Self {
            hidden: shape.hidden,
            activation: ActivationName::Tanh,
            noise_dim: shape.noise_dim,
            freeze_alpha: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TestFunctionConfig {
    pub scale_x: f64,
    pub scale_p: f64,
    pub scale_kappa: f64,
}

impl Default for TestFunctionConfig {
    fn default() -> Self {
        let s = TestScales::<f64>::default();
        Self {
            scale_x: s.x,
            scale_p: s.p,
            scale_kappa: s.kappa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeSamplingName {
    Uniform,
    Stratified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResidualConfig {
    pub time_sampling: TimeSamplingName,
    pub variance_correction: bool,
    pub fd_step: f64,
    pub fd_step_third: f64,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        let fd = FdSteps::<f64>::default();
        Self {
            time_sampling: TimeSamplingName::Uniform,
            variance_correction: false,
            fd_step: fd.first,
            fd_step_third: fd.third,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrozenFlowName {
    Free,
    Harmonic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub eval_every: usize,
    pub heldout_factor: usize,
    pub divergence_threshold: f64,
    pub checkpoint_every: usize,
    pub record_wallclock: bool,
    /// Replace the networks by the exact classical flow and train only the
    /// adversary.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frozen_flow: Option<FrozenFlowName>,
    /// Times at which `train` compares signed means to the classical orbit
    /// after the run (harmonic potential only).
    pub moment_times: Vec<f64>,
    pub moment_samples: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            eval_every: 50,
            heldout_factor: 4,
            divergence_threshold: 1e6,
            checkpoint_every: 0,
            record_wallclock: false,
            frozen_flow: None,
            moment_times: Vec::new(),
            moment_samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    /// Empty: `0, T/4, T/2, T`.
    pub times: Vec<f64>,
    pub samples: usize,
    pub bins: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            times: Vec::new(),
            samples: 20_000,
            bins: 48,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub half_width: f64,
    pub nodes: usize,
    pub hbars: Vec<f64>,
    pub tests: usize,
    pub dt: f64,
    /// Empty: one period `2 pi / omega` of the initial-state frequency.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            half_width: 8.0,
            nodes: 256,
            hbars: vec![0.25, 1.0, 4.0],
            tests: 20,
            dt: 1e-4,
            duration: None,
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| bad(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn preset(name: &str) -> Result<Self, CliError> {
        let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            bad(format!(
                "unknown preset {name:?}; known: {}",
                preset_names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        Self::parse(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn consts(&self) -> PhysicalConstants<f64> {
        PhysicalConstants {
            hbar: self.physics.hbar,
            mass: self.physics.mass,
            dim: self.physics.dim,
        }
    }

    pub fn run_config(&self) -> RunConfig<f64> {
        let r = &self.run;
        RunConfig {
            horizon: r.horizon,
            batch_size: r.batch_size,
            num_test: r.num_test,
            n_adv: r.n_adv,
            lr_gen: r.lr_gen,
            lr_adv: r.lr_adv,
            seed: self.seed,
            epochs: r.epochs,
        }
    }

    pub fn potential(&self) -> Result<LibraryPotential, CliError> {
        let params: Vec<(&str, f64)> = self
            .potential
            .params
            .iter()
            .map(|(k, v)| (k.as_str(), *v))
            .collect();
        if let Some((k, v)) = params.iter().find(|(_, v)| !v.is_finite()) {
            return Err(bad(format!("potential parameter {k} = {v} is not finite")));
        }
        LibraryPotential::from_name(&self.potential.name, &params, self.physics.dim)
            .map_err(|e| bad(e.to_string()))
    }

    pub fn decomposition(&self) -> Result<InitialDecomposition<f64>, CliError> {
        let c = &self.initial;
        let n = self.physics.dim;
        positive("initial.omega", c.omega)?;
        let center = |v: &Vec<f64>, name: &str| -> Result<Vec<f64>, CliError> {
            match v.len() {
                0 => Ok(vec![0.0; n]),
                len if len == n && v.iter().all(|u| u.is_finite()) => Ok(v.clone()),
                len if len == n => Err(bad(format!("initial.{name} has a non-finite entry"))),
                len => Err(bad(format!("initial.{name} has {len} entries for dim {n}"))),
            }
        };
        let (cx, cp) = (
            center(&c.center_x, "center_x")?,
            center(&c.center_p, "center_p")?,
        );
        let (m, h) = (self.physics.mass, self.physics.hbar);
        let out = match c.state {
            StateName::Coherent => InitialDecomposition::coherent(cx, cp, m, c.omega, h),
            StateName::FirstExcited => {
                if !c.center_x.is_empty() || !c.center_p.is_empty() {
                    return Err(bad("the first-excited state is centered at the origin"));
                }
                InitialDecomposition::first_excited(n, m, c.omega, h)
            }
        };
        out.map_err(|e| bad(e.to_string()))
    }

    /// Exact phase-space flow of the configured potential, when it has one
    /// (free streaming or a one-parameter harmonic well).
    pub fn classical_flow(&self) -> Option<AnalyticSolution> {
        let m = self.physics.mass;
        let param = |k: &str| self.potential.params.get(k).copied().unwrap_or(1.0);
        match self.potential.name.as_str() {
            "free" => Some(AnalyticSolution::Free { mass: m }),
            // V = k x^2 / 2 with k = m_V omega^2 sets the orbit frequency.
            "harmonic" => Some(AnalyticSolution::Harmonic {
                mass: m,
                omega: param("omega") * (param("mass") / m).sqrt(),
            }),
            _ => None,
        }
    }

    pub fn frozen_flow(&self) -> Option<AnalyticSolution> {
        self.train.frozen_flow.and(self.classical_flow())
    }

    pub fn train_options(&self) -> TrainOptions<f64> {
        let mut opts = TrainOptions::new(self.run_config(), self.consts());
        opts.shape = NetworkShape {
            hidden: self.network.hidden.clone(),
            activation: match self.network.activation {
                ActivationName::Tanh => Activation::Tanh,
                ActivationName::Identity => Activation::Identity,
            },
            noise_dim: self.network.noise_dim,
        };
        opts.scales = TestScales {
            x: self.test_functions.scale_x,
            p: self.test_functions.scale_p,
            kappa: self.test_functions.scale_kappa,
        };
        opts.time_sampling = match self.residual.time_sampling {
            TimeSamplingName::Uniform => TimeSampling::Uniform,
            TimeSamplingName::Stratified => TimeSampling::Stratified,
        };
        opts.variance_correction = self.residual.variance_correction;
        opts.fd_steps = FdSteps {
            first: self.residual.fd_step,
            third: self.residual.fd_step_third,
        };
        opts.freeze_alpha = self.network.freeze_alpha;
        opts.eval_every = self.train.eval_every;
        opts.heldout_factor = self.train.heldout_factor;
        opts.divergence_threshold = self.train.divergence_threshold;
        opts.checkpoint_every = self.train.checkpoint_every;
        opts.record_wallclock = self.train.record_wallclock;
        opts.lr_gen_decay = self.run.lr_gen_final.map(|final_lr| LrDecay {
            final_lr,
            epochs: self.run.epochs,
        });
        opts
    }

    /// Evaluation times, defaulting to quarters of the horizon.
    pub fn evaluation_times(&self) -> Vec<f64> {
        if self.evaluate.times.is_empty() {
            let t = self.run.horizon;
            vec![0.0, 0.25 * t, 0.5 * t, t]
        } else {
            self.evaluate.times.clone()
        }
    }

    /// Every range and cross-field check; nothing runs before this passes.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut run = self.run_config();
        run.epochs = run.epochs.max(1);
        validate_config(&run, &self.consts()).map_err(|e| bad(e.to_string()))?;
        self.potential()?;
        self.decomposition()?;
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            return Err(bad("network.hidden needs at least one non-zero width"));
        }
        if self.network.noise_dim == Some(0) {
            return Err(bad("network.noise_dim must be at least 1"));
        }
        let tf = &self.test_functions;
        if let Some(lr) = self.run.lr_gen_final {
            positive("run.lr_gen_final", lr)?;
        }
        positive("test_functions.scale_x", tf.scale_x)?;
        positive("test_functions.scale_p", tf.scale_p)?;
        positive("test_functions.scale_kappa", tf.scale_kappa)?;
        positive("residual.fd_step", self.residual.fd_step)?;
        positive("residual.fd_step_third", self.residual.fd_step_third)?;
        positive(
            "train.divergence_threshold",
            self.train.divergence_threshold,
        )?;
        if self.train.heldout_factor == 0 {
            return Err(bad("train.heldout_factor must be at least 1"));
        }
        if self.train.frozen_flow == Some(FrozenFlowName::Harmonic)
            && self.potential.name != "harmonic"
        {
            return Err(bad("the harmonic frozen flow needs the harmonic potential"));
        }
        if self.train.frozen_flow == Some(FrozenFlowName::Free) && self.potential.name != "free" {
            return Err(bad("the free frozen flow needs the free potential"));
        }
        let in_range = |t: f64| (0.0..=self.run.horizon).contains(&t);
        if let Some(t) = self.train.moment_times.iter().find(|t| !in_range(**t)) {
            return Err(bad(format!(
                "train.moment_times entry {t} outside [0, {}]",
                self.run.horizon
            )));
        }
        if !self.train.moment_times.is_empty() && self.train.moment_samples == 0 {
            return Err(bad("train.moment_samples must be at least 1"));
        }
        if let Some(t) = self.evaluate.times.iter().find(|t| !in_range(**t)) {
            return Err(bad(format!(
                "evaluate.times entry {t} outside [0, {}]",
                self.run.horizon
            )));
        }
        if self.evaluate.samples == 0 || self.evaluate.bins == 0 {
            return Err(bad("evaluate.samples and evaluate.bins must be at least 1"));
        }
        let o = &self.oracle;
        positive("oracle.half_width", o.half_width)?;
        positive("oracle.dt", o.dt)?;
        if let Some(d) = o.duration {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(bad(format!(
                    "oracle.duration must be non-negative, got {d}"
                )));
            }
        }
        if o.nodes < 4 || !o.nodes.is_power_of_two() {
            return Err(bad(format!(
                "oracle.nodes must be a power of two >= 4, got {}",
                o.nodes
            )));
        }
        if o.hbars.is_empty() {
            return Err(bad("oracle.hbars is empty"));
        }
        for &h in &o.hbars {
            positive("oracle.hbars entry", h)?;
        }
        if o.tests == 0 {
            return Err(bad("oracle.tests must be at least 1"));
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("wigner-out"))
    }
}
