//! Experiment configuration (TOML).
//!
//! ```toml
//! [model]
//! name = "heat"            # heat | ou | langevin_quadratic | langevin_logcosh (g1..g4)
//! dim = 1
//! # k = 1.0                # ou, langevin_*
//! # sigma = 1.0            # ou
//! # l3 = 1.0               # langevin_*: override the declared L3
//! # [model.constants]      # heat, ou: override any declared constant
//! # l1 = 1.0
//!
//! [params]
//! a = [0.5]
//! a_prime = [2.0]
//! # beta = 1.0             # langevin_*
//! # beta_prime = 1.0
//!
//! [simulation]
//! orders = [2.0, 3.0, 4.0]
//! n_traj = 100000
//! t_end = 1.0
//! n_steps = 1000
//! snapshots = 11
//! seed = 20240611
//!
//! [initial]                # per marginal: point | gaussian | file
//! left = { kind = "point" }
//! right = { kind = "gaussian", std = 0.5 }
//!
//! [transport]
//! cap = 4096
//! subcloud = 2048
//! bootstrap = 20
//!
//! [check]
//! envelopes = ["theorem1", "example_p2"]
//! z = 3.0
//!
//! [output]
//! dir = "out/heat"
//! plots = true
//! ```
//!
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::{EnvelopeKind, MAX_ORDER};
use crate::harness::HarnessError;
use crate::transport::DEFAULT_CAP;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GalleryName {
    #[serde(alias = "g1")]
    Heat,
    #[serde(alias = "g2")]
    Ou,
    #[serde(alias = "g3")]
    LangevinQuadratic,
    #[serde(alias = "g4")]
    LangevinLogcosh,
}

impl GalleryName {
    pub fn is_langevin(self) -> bool {
        matches!(self, GalleryName::LangevinQuadratic | GalleryName::LangevinLogcosh)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsOverride {
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub m: Option<f64>,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: GalleryName,
    #[serde(default = "one")]
    pub dim: usize,
    pub k: Option<f64>,
    pub sigma: Option<f64>,
    pub l3: Option<f64>,
    pub constants: Option<ConstantsOverride>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub a: Vec<f64>,
    pub a_prime: Vec<f64>,
    pub beta: Option<f64>,
    pub beta_prime: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub orders: Vec<f64>,
    pub n_traj: usize,
    pub t_end: f64,
    pub n_steps: usize,
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_snapshots() -> usize {
    11
}

/// Law of one initial marginal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Point mass, at the origin unless `at` is given.
    Point { at: Option<Vec<f64>> },
    /// Isotropic Gaussian N(mean, std²I), sampled by inverse CDF.
    Gaussian { mean: Option<Vec<f64>>, std: f64 },
    /// Cloud loaded from CSV, one point per row; trajectory i starts at row i mod rows.
    File { path: PathBuf },
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Point { at: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default)]
    pub left: InitialSpec,
    #[serde(default)]
    pub right: InitialSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default = "default_subcloud")]
    pub subcloud: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
}

fn default_cap() -> usize {
    DEFAULT_CAP
}
fn default_subcloud() -> usize {
    2048
}
fn default_bootstrap() -> usize {
    20
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self { cap: default_cap(), subcloud: default_subcloud(), bootstrap: default_bootstrap() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    pub envelopes: Vec<EnvelopeKind>,
    #[serde(default = "default_z")]
    pub z: f64,
}

fn default_z() -> f64 {
    3.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub plots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default = "default_pairs")]
    pub n_pairs: usize,
    #[serde(default = "default_radius")]
    pub box_radius: f64,
}

fn default_pairs() -> usize {
    2000
}
fn default_radius() -> f64 {
    5.0
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { n_pairs: default_pairs(), box_radius: default_radius() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub params: ParamsConfig,
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub transport: TransportConfig,
    pub check: CheckConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; relative paths (initial `file`
    /// clouds, `output.dir`) resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            for spec in [&mut cfg.initial.left, &mut cfg.initial.right] {
                if let InitialSpec::File { path } = spec {
                    if path.is_relative() {
                        *path = base.join(&*path);
                    }
                }
            }
            if let Some(dir) = &mut cfg.output.dir {
                if dir.is_relative() {
                    *dir = base.join(&*dir);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        let m = &self.model;
        if m.dim == 0 {
            return bad("model.dim must be at least 1".into());
        }
        if self.params.a.len() != 1 || self.params.a_prime.len() != 1 {
            return bad("gallery models take a single scalar parameter: params.a and params.a_prime need one entry".into());
        }
        if self.params.a.iter().chain(&self.params.a_prime).any(|v| !v.is_finite()) {
            return bad("parameters must be finite".into());
        }
        match m.name {
            GalleryName::Heat => {
                if self.params.a[0] <= 0.0 || self.params.a_prime[0] <= 0.0 {
                    return bad("heat model: diffusion coefficients a, a_prime must be positive".into());
                }
            }
            GalleryName::Ou => {
                if !m.k.is_some_and(|k| k > 0.0) || !m.sigma.is_some_and(|s| s > 0.0) {
                    return bad("ou model needs positive model.k and model.sigma".into());
                }
            }
            GalleryName::LangevinQuadratic | GalleryName::LangevinLogcosh => {
                if !m.k.is_some_and(|k| k > 0.0) {
                    return bad("langevin models need positive model.k".into());
                }
                if !self.params.beta.is_some_and(|b| b > 0.0) || !self.params.beta_prime.is_some_and(|b| b > 0.0) {
                    return bad("langevin models need positive params.beta and params.beta_prime".into());
                }
            }
        }
        if !m.name.is_langevin() && (self.params.beta.is_some() || self.params.beta_prime.is_some()) {
            return bad("params.beta only applies to langevin models".into());
        }
        if m.name.is_langevin() && m.constants.is_some() {
            return bad("model.constants applies to heat/ou models; use model.l3 for langevin".into());
        }
        let s = &self.simulation;
        if s.orders.is_empty() {
            return bad("simulation.orders must list at least one order".into());
        }
        if let Some(p) = s.orders.iter().find(|p| !(p.is_finite() && **p >= 2.0 && **p <= MAX_ORDER)) {
            return bad(format!("simulation.orders: {p} is outside [2, 32]"));
        }
        if s.n_traj == 0 || s.n_steps == 0 {
            return bad("simulation.n_traj and simulation.n_steps must be positive".into());
        }
        if !(s.t_end.is_finite() && s.t_end > 0.0) {
            return bad("simulation.t_end must be positive".into());
        }
        if self.check.envelopes.is_empty() {
            return bad("check.envelopes must name at least one envelope".into());
        }
        for kind in &self.check.envelopes {
            let langevin_kind = matches!(kind, EnvelopeKind::Langevin | EnvelopeKind::LangevinP2Corrected);
            if langevin_kind != m.name.is_langevin() {
                return bad(format!("envelope `{}` does not apply to model {:?}", kind.name(), m.name));
            }
            if *kind == EnvelopeKind::ExampleP2 && m.name != GalleryName::Heat {
                return bad("example_p2 needs b = 0 and state-independent A (heat model)".into());
            }
            let p2_only = matches!(kind, EnvelopeKind::ExampleP2 | EnvelopeKind::LangevinP2Corrected);
            if p2_only && !s.orders.contains(&2.0) {
                return bad(format!("envelope `{}` needs order 2 in simulation.orders", kind.name()));
            }
        }
        if !(self.check.z.is_finite() && self.check.z >= 0.0) {
            return bad("check.z must be nonnegative".into());
        }
        let t = &self.transport;
        if t.cap == 0 || t.subcloud == 0 {
            return bad("transport.cap and transport.subcloud must be positive".into());
        }
        for spec in [&self.initial.left, &self.initial.right] {
            match spec {
                InitialSpec::Point { at: Some(v) } if v.len() != m.dim => {
                    return bad(format!("initial point has {} coordinates, model.dim is {}", v.len(), m.dim));
                }
                InitialSpec::Gaussian { mean, std } => {
                    if !(std.is_finite() && *std >= 0.0) {
                        return bad("initial gaussian std must be nonnegative".into());
                    }
                    if mean.as_ref().is_some_and(|v| v.len() != m.dim) {
                        return bad("initial gaussian mean must have model.dim coordinates".into());
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}
