//! End-to-end experiments: sample initial clouds, couple them, simulate the
//! synchronous coupling, estimate Ŵ_p on snapshot subclouds, evaluate the
//! envelopes and emit reports.

pub mod config;
pub mod plot;
pub mod report;

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{ExperimentConfig, GalleryName, InitialSpec};
pub use report::{
    check_bound, CurveRow, EmpiricalPoint, EnvelopeTable, ExperimentReport, TolerancePolicy, Verdict, VerdictEntry,
    VerdictTable,
};

use crate::bounds::{langevin_constants, noise_mismatch, theorem1_constants, BoundEnvelope, EnvelopeKind};
use crate::model::{
    dist, probe_constants, probe_langevin, HeatFlow, HypothesisConstants, LangevinModel, LogCoshPotential, OuShift,
    ParameterizedModel, ProbeReport, ProbeSpec, QuadraticPotential,
};
use crate::oracle::{coupled_gap_oracle, GapModel, GapQuery};
use crate::simulate::{simulate_coupled, simulate_langevin_coupled, CoupledEnsemble, RngStreamSpec, Snapshot, TimeGrid};
use crate::transport::{optimal_initial_coupling, wasserstein, PairedClouds, PointCloud};

/// Pipeline stage named in errors and in the `FAILED` marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Probe,
    Sampling,
    Coupling,
    Simulation,
    Transport,
    Bounds,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Probe => "probe",
            Stage::Sampling => "sampling",
            Stage::Coupling => "coupling",
            Stage::Simulation => "simulation",
            Stage::Transport => "transport",
            Stage::Bounds => "bounds",
            Stage::Output => "output",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{stage} stage failed: {message}")]
    Stage { stage: Stage, message: String },
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl HarnessError {
    pub fn stage(&self) -> Stage {
        match self {
            HarnessError::Config(_) => Stage::Config,
            HarnessError::Stage { stage, .. } => *stage,
            HarnessError::Io { .. } => Stage::Output,
        }
    }
}

fn at(stage: Stage) -> impl Fn(&dyn fmt::Display) -> HarnessError {
    move |e| HarnessError::Stage { stage, message: e.to_string() }
}

/// Salts separating the random consumers of one master seed.
const SALT_LEFT: u64 = 0x1e57;
const SALT_RIGHT: u64 = 0x21e7;
const SALT_BOOTSTRAP: u64 = 0xb007;
const SALT_PROBE: u64 = 0x9e0b;

/// Command-line overrides of the config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    /// Worker threads; affects speed only.
    pub threads: Option<usize>,
    pub plots: Option<bool>,
    pub output_dir: Option<PathBuf>,
}

/// Draws `n` initial points in dimension `dim`.
///
/// Point masses give `n` copies, Gaussians are sampled by inverse CDF from a
/// stream keyed by `seed`, and file clouds are cycled row by row to length `n`.
pub fn sample_initial(spec: &InitialSpec, dim: usize, n: usize, seed: u64) -> Result<PointCloud, HarnessError> {
    let sampling = at(Stage::Sampling);
    if n == 0 {
        return Err(sampling(&"n must be at least 1"));
    }
    match spec {
        InitialSpec::Point { at: point } => {
            let x = point.clone().unwrap_or_else(|| vec![0.0; dim]);
            PointCloud::repeated(&x, n).map_err(|e| sampling(&e))
        }
        InitialSpec::Gaussian { mean, std } => {
            let mean = mean.clone().unwrap_or_else(|| vec![0.0; dim]);
            let mut coords = Vec::with_capacity(n * dim);
            let streams = RngStreamSpec::new(seed);
            for i in 0..n {
                let mut s = streams.stream(i as u64);
                coords.extend(mean.iter().map(|m| m + std * s.next_normal()));
            }
            PointCloud::new(dim, coords).map_err(|e| sampling(&e))
        }
        InitialSpec::File { path } => {
            let cloud = PointCloud::load_csv(path).map_err(|e| sampling(&e))?;
            if cloud.dim() != dim {
                return Err(sampling(&format!(
                    "{} has {} columns, model.dim is {dim}",
                    path.display(),
                    cloud.dim()
                )));
            }
            let idx: Vec<usize> = (0..n).map(|i| i % cloud.len()).collect();
            Ok(cloud.select(&idx))
        }
    }
}

/// A gallery model instantiated from a config.
pub enum BuiltModel {
    Ito(Box<dyn ParameterizedModel>),
    Langevin(Box<dyn LangevinModel>),
}

struct WithL3 {
    inner: Box<dyn LangevinModel>,
    l3: f64,
}

impl LangevinModel for WithL3 {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }
    fn grad_potential(&self, x: &[f64], a: &[f64], out: &mut [f64]) {
        self.inner.grad_potential(x, a, out)
    }
    fn convexity(&self) -> f64 {
        self.inner.convexity()
    }
    fn param_lipschitz(&self) -> f64 {
        self.l3
    }
}

fn override_constants(base: HypothesisConstants, cfg: &ExperimentConfig) -> Result<HypothesisConstants, HarnessError> {
    let Some(o) = &cfg.model.constants else { return Ok(base) };
    HypothesisConstants::new(o.l1.unwrap_or(base.l1), o.l2.unwrap_or(base.l2), o.m.unwrap_or(base.m), o.c.unwrap_or(base.c))
        .map_err(|e| HarnessError::Config(e.to_string()))
}

pub fn build_model(cfg: &ExperimentConfig) -> Result<BuiltModel, HarnessError> {
    let m = &cfg.model;
    let (a, ap) = (cfg.params.a[0], cfg.params.a_prime[0]);
    let cerr = |e: crate::model::ModelError| HarnessError::Config(e.to_string());
    let k = m.k.unwrap_or(0.0);
    Ok(match m.name {
        GalleryName::Heat => {
            let heat = HeatFlow::for_params(m.dim, a, ap).map_err(cerr)?;
            let c = override_constants(heat.constants, cfg)?;
            BuiltModel::Ito(Box::new(heat.with_constants(c)))
        }
        GalleryName::Ou => {
            let ou = OuShift::for_params(m.dim, k, m.sigma.unwrap_or(0.0), a, ap).map_err(cerr)?;
            let c = override_constants(ou.constants, cfg)?;
            BuiltModel::Ito(Box::new(ou.with_constants(c)))
        }
        GalleryName::LangevinQuadratic | GalleryName::LangevinLogcosh => {
            let inner: Box<dyn LangevinModel> = if m.name == GalleryName::LangevinQuadratic {
                Box::new(QuadraticPotential::new(m.dim, k).map_err(cerr)?)
            } else {
                Box::new(LogCoshPotential::new(m.dim, k).map_err(cerr)?)
            };
            match m.l3 {
                Some(l3) if !(l3.is_finite() && l3 >= 0.0) => {
                    return Err(HarnessError::Config(format!("model.l3 must be nonnegative, got {l3}")))
                }
                Some(l3) => BuiltModel::Langevin(Box::new(WithL3 { inner, l3 })),
                None => BuiltModel::Langevin(inner),
            }
        }
    })
}

/// Runs the hypothesis probe configured in `[probe]` over the box spanned by
/// a and a′.
pub fn probe(cfg: &ExperimentConfig, model: &BuiltModel, seed: u64) -> ProbeReport {
    let spec = ProbeSpec::between(
        &cfg.params.a,
        &cfg.params.a_prime,
        cfg.probe.n_pairs,
        cfg.probe.box_radius,
        RngStreamSpec::new(seed).derived(SALT_PROBE).master_seed,
    );
    match model {
        BuiltModel::Ito(m) => probe_constants(m.as_ref(), &spec),
        BuiltModel::Langevin(m) => probe_langevin(m.as_ref(), &spec),
    }
}

fn point_of(spec: &InitialSpec, dim: usize) -> Option<Vec<f64>> {
    match spec {
        InitialSpec::Point { at } => Some(at.clone().unwrap_or_else(|| vec![0.0; dim])),
        _ => None,
    }
}

/// Pairs the two initial clouds by an optimal plan.
///
/// A point-mass side makes every pairing optimal. In one dimension the sorted
/// pairing is optimal for every order at once; otherwise the plan is optimal
/// for the first listed order.
fn couple_initial(left: PointCloud, right: PointCloud, p: f64, cap: usize) -> Result<PairedClouds, HarnessError> {
    let coupling = at(Stage::Coupling);
    if left.is_point_mass() || right.is_point_mass() {
        return PairedClouds::new(left, right).map_err(|e| coupling(&e));
    }
    let c = optimal_initial_coupling(&left, &right, p, cap).map_err(|e| coupling(&e))?;
    Ok(c.pairs)
}

fn stride_indices(n: usize, m: usize) -> Vec<usize> {
    let stride = n / m;
    (0..m).map(|i| i * stride).collect()
}

/// Ŵ_p^p on the strided subcloud of one snapshot, with a paired-bootstrap
/// standard error and the cost of the realized (identity) pairing.
fn estimate_snapshot(
    snap: &Snapshot,
    orders: &[f64],
    cfg: &ExperimentConfig,
    boot: &RngStreamSpec,
    snap_index: usize,
) -> Result<Vec<EmpiricalPoint>, HarnessError> {
    let transport = at(Stage::Transport);
    let n = snap.pairs.len();
    let m = n.min(cfg.transport.subcloud);
    let idx = stride_indices(n, m);
    let left = snap.pairs.left.select(&idx);
    let right = snap.pairs.right.select(&idx);
    let sub = PairedClouds::new(left.clone(), right.clone()).map_err(|e| transport(&e))?;

    let mut stream = boot.stream(snap_index as u64);
    let resamples: Vec<Vec<usize>> = (0..cfg.transport.bootstrap)
        .map(|_| (0..m).map(|_| (stream.next_u64() % m as u64) as usize).collect())
        .collect();

    let mut out = Vec::with_capacity(orders.len());
    for &p in orders {
        let w_hat = wasserstein(&left, &right, p, cfg.transport.cap).map_err(|e| transport(&e))?.cost;
        let coupling_pp = sub.coupling_cost(p);
        if w_hat > coupling_pp + 1e-9 * (1.0 + coupling_pp) {
            return Err(transport(&format!(
                "solver cost {w_hat} exceeds the admissible synchronous pairing {coupling_pp} at t = {}, p = {p}",
                snap.time
            )));
        }
        let mut boots = Vec::with_capacity(resamples.len());
        for r in &resamples {
            let c = wasserstein(&left.select(r), &right.select(r), p, cfg.transport.cap).map_err(|e| transport(&e))?;
            boots.push(c.cost);
        }
        out.push(EmpiricalPoint {
            p,
            t: snap.time,
            step: snap.step,
            subcloud: m,
            w_hat_pp: w_hat,
            w_hat_se: sample_std(&boots),
            coupling_pp,
            moment_pp: 0.0,
            moment_se: 0.0,
            oracle: None,
        });
    }
    Ok(out)
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn estimate_all(
    ens: &CoupledEnsemble,
    orders: &[f64],
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<EmpiricalPoint>, HarnessError> {
    let boot = RngStreamSpec::new(seed).derived(SALT_BOOTSTRAP);
    let task = |(i, s): (usize, &Snapshot)| estimate_snapshot(s, orders, cfg, &boot, i);
    #[cfg(feature = "parallel")]
    let per_snap: Vec<Result<Vec<EmpiricalPoint>, HarnessError>> = {
        use rayon::prelude::*;
        ens.snapshots.par_iter().enumerate().map(task).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_snap: Vec<Result<Vec<EmpiricalPoint>, HarnessError>> = ens.snapshots.iter().enumerate().map(task).collect();

    let mut points = Vec::new();
    for r in per_snap {
        points.extend(r?);
    }
    for pt in &mut points {
        let curve = ens.curve(pt.p).expect("moment curve for every order");
        pt.moment_pp = curve.mean[pt.step];
        pt.moment_se = curve.std_err[pt.step];
    }
    Ok(points)
}

fn gap_model(cfg: &ExperimentConfig) -> Option<GapModel> {
    let m = &cfg.model;
    match m.name {
        GalleryName::Heat => Some(GapModel::Heat),
        GalleryName::Ou => Some(GapModel::Ou { k: m.k?, sigma: m.sigma? }),
        GalleryName::LangevinQuadratic => {
            Some(GapModel::LangevinQuadratic { k: m.k?, beta: cfg.params.beta?, beta_prime: cfg.params.beta_prime? })
        }
        GalleryName::LangevinLogcosh => None,
    }
}

fn attach_oracle(points: &mut [EmpiricalPoint], cfg: &ExperimentConfig) {
    let dim = cfg.model.dim;
    let (Some(model), Some(x0), Some(x0p)) =
        (gap_model(cfg), point_of(&cfg.initial.left, dim), point_of(&cfg.initial.right, dim))
    else {
        return;
    };
    for pt in points {
        let q = GapQuery {
            model: model.clone(),
            dim,
            a: cfg.params.a[0],
            a_prime: cfg.params.a_prime[0],
            x0: x0.clone(),
            x0_prime: x0p.clone(),
            p: pt.p,
            t: pt.t,
        };
        pt.oracle = coupled_gap_oracle(&q).ok();
    }
}

fn build_envelopes(
    cfg: &ExperimentConfig,
    model: &BuiltModel,
    w0p: &[(f64, f64)],
    warnings: &mut Vec<String>,
) -> Result<Vec<BoundEnvelope>, HarnessError> {
    let bounds = at(Stage::Bounds);
    let delta_a = dist(&cfg.params.a, &cfg.params.a_prime);
    let mut out = Vec::new();
    for kind in &cfg.check.envelopes {
        for &(p, w0) in w0p {
            let env = match (kind, model) {
                (EnvelopeKind::Theorem1, BuiltModel::Ito(m)) => {
                    let c = m.constants();
                    BoundEnvelope::theorem1(theorem1_constants(c.l1, c.l2, c.m, p).map_err(|e| bounds(&e))?, w0, delta_a)
                }
                (EnvelopeKind::ExampleP2, BuiltModel::Ito(m)) if p == 2.0 => {
                    let c = m.constants();
                    BoundEnvelope::example_p2(c.l1, c.m, w0, delta_a).map_err(|e| bounds(&e))?
                }
                (EnvelopeKind::Langevin, BuiltModel::Langevin(m)) => {
                    let (beta, beta_p) = (cfg.params.beta.unwrap_or(1.0), cfg.params.beta_prime.unwrap_or(1.0));
                    let c = langevin_constants(m.convexity(), m.param_lipschitz(), m.dim(), p).map_err(|e| bounds(&e))?;
                    for w in &c.warnings {
                        if !warnings.contains(w) {
                            warnings.push(w.clone());
                        }
                    }
                    BoundEnvelope::langevin(c, w0, delta_a, noise_mismatch(beta, beta_p))
                }
                (EnvelopeKind::LangevinP2Corrected, BuiltModel::Langevin(m)) if p == 2.0 => {
                    let (beta, beta_p) = (cfg.params.beta.unwrap_or(1.0), cfg.params.beta_prime.unwrap_or(1.0));
                    BoundEnvelope::langevin_p2_corrected(
                        m.convexity(),
                        m.param_lipschitz(),
                        m.dim(),
                        w0,
                        delta_a,
                        noise_mismatch(beta, beta_p),
                    )
                    .map_err(|e| bounds(&e))?
                }
                (EnvelopeKind::ExampleP2 | EnvelopeKind::LangevinP2Corrected, _) => continue,
                (kind, _) => {
                    return Err(HarnessError::Config(format!("envelope `{}` does not apply to this model", kind.name())))
                }
            };
            out.push(env);
        }
    }
    Ok(out)
}

fn run_pipeline(cfg: &ExperimentConfig, seed: u64) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let model = build_model(cfg)?;
    let sim = &cfg.simulation;
    let dim = cfg.model.dim;

    let probe_report = probe(cfg, &model, seed);
    let mut warnings: Vec<String> = probe_report
        .failures()
        .map(|c| format!("hypothesis probe: {} declared {} but observed {}", c.name, c.declared, c.observed))
        .collect();

    let streams = RngStreamSpec::new(seed);
    let left = sample_initial(&cfg.initial.left, dim, sim.n_traj, streams.derived(SALT_LEFT).master_seed)?;
    let right = sample_initial(&cfg.initial.right, dim, sim.n_traj, streams.derived(SALT_RIGHT).master_seed)?;
    let start = couple_initial(left, right, sim.orders[0], cfg.transport.cap)?;

    let simulation = at(Stage::Simulation);
    let grid = TimeGrid::with_even_snapshots(sim.t_end, sim.n_steps, sim.snapshots).map_err(|e| simulation(&e))?;
    let (a, ap) = (&cfg.params.a, &cfg.params.a_prime);
    let ens = match &model {
        BuiltModel::Ito(m) => simulate_coupled(m.as_ref(), a, ap, &start, &grid, &sim.orders, &streams),
        BuiltModel::Langevin(m) => simulate_langevin_coupled(
            m.as_ref(),
            a,
            ap,
            cfg.params.beta.unwrap_or(1.0),
            cfg.params.beta_prime.unwrap_or(1.0),
            &start,
            &grid,
            &sim.orders,
            &streams,
        ),
    }
    .map_err(|e| simulation(&e))?;

    let mut points = estimate_all(&ens, &sim.orders, cfg, seed)?;
    attach_oracle(&mut points, cfg);

    let w0p: Vec<(f64, f64)> = ens.moment_curves.iter().map(|c| (c.order, c.mean[0])).collect();
    let envelopes = build_envelopes(cfg, &model, &w0p, &mut warnings)?;
    for env in &envelopes {
        if let Some(why) = &env.vacuous {
            warnings.push(format!("{} envelope at p = {} is vacuous: {why}", env.kind().name(), env.order));
        }
    }
    let tables = envelopes
        .into_iter()
        .map(|env| EnvelopeTable::evaluate(env, &points))
        .collect::<Vec<_>>();

    let mut report = ExperimentReport {
        status: "complete".into(),
        config: cfg.clone(),
        seed,
        warnings,
        probe: probe_report,
        delta_a: dist(a, ap),
        initial_w0p: w0p,
        dt: grid.dt(),
        moment_curves: ens.moment_curves.clone(),
        empirical: points,
        tables,
        verdict: VerdictTable::default(),
    };
    let policy = TolerancePolicy { z: cfg.check.z };
    report.verdict = check_bound(&report, &policy);
    report.apply_verdicts();
    Ok(report)
}

/// Runs one experiment and, when an output directory is configured (or given
/// in `opts`), writes `curves.csv`, `curves_<envelope>.csv`, `report.json`
/// and optional plots there. On failure a `FAILED` marker naming the stage is
/// written instead.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentReport, HarnessError> {
    let seed = opts.seed.unwrap_or(cfg.simulation.seed);
    let out_dir = opts.output_dir.clone().or_else(|| cfg.output.dir.clone());
    let plots = opts.plots.unwrap_or(cfg.output.plots);
    let result = with_threads(opts.threads, || run_pipeline(cfg, seed))?;
    match (&result, &out_dir) {
        (Ok(report), Some(dir)) => report::write_outputs(report, dir, plots)?,
        (Err(e), Some(dir)) => report::write_failure(dir, e),
        _ => {}
    }
    result
}

#[cfg(feature = "parallel")]
fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, HarnessError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| HarnessError::Config(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<T>(_threads: Option<usize>, f: impl FnOnce() -> T) -> Result<T, HarnessError> {
    Ok(f())
}

/// Loads a config, resolving relative paths against its directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    ExperimentConfig::load(path)
}
