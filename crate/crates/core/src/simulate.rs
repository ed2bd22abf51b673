//! Synchronous coupling of two Euler-Maruyama chains.
//!
//! Both legs of a pair consume the same Brownian increment at every step, so
//! the difference process X − X′ only sees the mismatch of the coefficients.
//! Trajectory i draws its increments from a ChaCha stream keyed by
//! (master_seed, i); trajectories are processed in fixed-size chunks and all
//! reductions run in chunk order, which keeps every output bitwise identical
//! whatever the number of worker threads.

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;
use thiserror::Error;

use crate::model::{self, LangevinModel, ModelError, ParameterizedModel};
use crate::transport::{PairedClouds, PointCloud};

/// |X| beyond this aborts the run.
pub const BLOWUP_THRESHOLD: f64 = 1e8;

/// Trajectories per work unit. Part of the determinism contract: changing it
/// changes the summation tree.
const CHUNK: usize = 256;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("simulation diverged: trajectory {trajectory} left the ball |x| <= 1e8 at step {step}")]
    Diverged { trajectory: usize, step: usize },
    #[error("trajectory {trajectory}, step {step}: {source}")]
    Model {
        trajectory: usize,
        step: usize,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Setup(#[from] ModelError),
    #[error("invalid time grid: {0}")]
    Grid(String),
    #[error("invalid simulation input: {0}")]
    Input(String),
}

/// Uniform time discretization with retained snapshot steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_end: f64,
    n_steps: usize,
    snapshot_indices: Vec<usize>,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize, mut snapshot_indices: Vec<usize>) -> Result<Self, SimulationError> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(SimulationError::Grid(format!("t_end must be positive, got {t_end}")));
        }
        if n_steps == 0 {
            return Err(SimulationError::Grid("n_steps must be positive".into()));
        }
        snapshot_indices.sort_unstable();
        snapshot_indices.dedup();
        if let Some(&bad) = snapshot_indices.iter().find(|&&s| s > n_steps) {
            return Err(SimulationError::Grid(format!("snapshot step {bad} exceeds n_steps = {n_steps}")));
        }
        Ok(Self { t_end, n_steps, snapshot_indices })
    }

    /// `count` snapshots evenly spread over [0, t_end], endpoints included.
    pub fn with_even_snapshots(t_end: f64, n_steps: usize, count: usize) -> Result<Self, SimulationError> {
        let snaps = match count {
            0 => Vec::new(),
            1 => vec![n_steps],
            c => (0..c).map(|i| ((i as f64) * n_steps as f64 / (c - 1) as f64).round() as usize).collect(),
        };
        Self::new(t_end, n_steps, snaps)
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn time(&self, step: usize) -> f64 {
        if step == self.n_steps {
            self.t_end
        } else {
            step as f64 * self.dt()
        }
    }

    pub fn snapshot_indices(&self) -> &[usize] {
        &self.snapshot_indices
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }
}

/// Counter-based Gaussian streams: trajectory i's increments depend only on
/// (master_seed, i).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStreamSpec {
    pub master_seed: u64,
}

impl RngStreamSpec {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn stream(&self, index: u64) -> GaussianStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(index);
        GaussianStream { rng }
    }

    /// A stream family independent of this one, for other consumers of the
    /// same master seed (initial sampling, bootstrap).
    pub fn derived(&self, salt: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed ^ salt.rotate_left(17));
        rng.set_stream(u64::MAX - salt);
        Self { master_seed: rng.next_u64() }
    }
}

/// Standard normals by inverse CDF from a ChaCha8 stream.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: ChaCha8Rng,
}

impl GaussianStream {
    /// Uniform on the open interval (0, 1).
    pub fn next_open01(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        inverse_normal_cdf(self.next_open01())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for o in out {
            *o = self.next_normal();
        }
    }
}

/// Φ⁻¹(u) = −√2·erfc⁻¹(2u).
pub fn inverse_normal_cdf(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// One leg of a coupled pair: a single Euler-Maruyama update driven by the
/// increment `dw` ~ N(0, dt·I).
pub trait Leg: Sync {
    fn dim(&self) -> usize;
    fn advance(&self, x: &[f64], dw: &[f64], dt: f64, out: &mut [f64]) -> Result<(), ModelError>;
}

/// X ↦ X + (b + ∇·A)dt + √2·√A·dW for a [`ParameterizedModel`].
pub struct ItoLeg<'a> {
    model: &'a dyn ParameterizedModel,
    param: Vec<f64>,
    /// √2·σ when A does not depend on x.
    frozen_noise: Option<DMatrix<f64>>,
}

impl<'a> ItoLeg<'a> {
    pub fn new(model: &'a dyn ParameterizedModel, param: &[f64]) -> Result<Self, ModelError> {
        if param.len() != model.param_dim() {
            return Err(ModelError::Dimension { expected: model.param_dim(), got: param.len() });
        }
        let frozen_noise = if model.diffusion_is_state_independent() {
            let x0 = vec![0.0; model.dim()];
            Some(model::spd_sqrt(&model.diffusion(&x0, param))? * std::f64::consts::SQRT_2)
        } else {
            None
        };
        Ok(Self { model, param: param.to_vec(), frozen_noise })
    }
}

fn add_mat_vec(m: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    let d = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, vj) in v.iter().enumerate().take(d) {
            acc += m[(i, j)] * vj;
        }
        *o += acc;
    }
}

impl Leg for ItoLeg<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn advance(&self, x: &[f64], dw: &[f64], dt: f64, out: &mut [f64]) -> Result<(), ModelError> {
        self.model.drift(x, &self.param, out);
        match &self.frozen_noise {
            Some(noise) => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = xi + *o * dt;
                }
                add_mat_vec(noise, dw, out);
            }
            None => {
                let div = model::divergence(self.model, x, &self.param);
                for ((o, xi), g) in out.iter_mut().zip(x).zip(&div) {
                    *o = xi + (*o + g) * dt;
                }
                let sigma = model::spd_sqrt(&self.model.diffusion(x, &self.param))? * std::f64::consts::SQRT_2;
                add_mat_vec(&sigma, dw, out);
            }
        }
        Ok(())
    }
}

/// X ↦ X − ∇ₓV(X, a)dt + √(2/β)·dW.
pub struct LangevinLeg<'a> {
    model: &'a dyn LangevinModel,
    param: Vec<f64>,
    noise: f64,
}

impl<'a> LangevinLeg<'a> {
    pub fn new(model: &'a dyn LangevinModel, param: &[f64], beta: f64) -> Result<Self, ModelError> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(ModelError::InvalidParameter(format!("inverse temperature must be positive, got {beta}")));
        }
        if param.len() != model.param_dim() {
            return Err(ModelError::Dimension { expected: model.param_dim(), got: param.len() });
        }
        Ok(Self { model, param: param.to_vec(), noise: (2.0 / beta).sqrt() })
    }

    pub fn noise_amplitude(&self) -> f64 {
        self.noise
    }
}

impl Leg for LangevinLeg<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn advance(&self, x: &[f64], dw: &[f64], dt: f64, out: &mut [f64]) -> Result<(), ModelError> {
        self.model.grad_potential(x, &self.param, out);
        for ((o, xi), w) in out.iter_mut().zip(x).zip(dw) {
            *o = xi - *o * dt + self.noise * w;
        }
        Ok(())
    }
}

/// One synchronous Euler-Maruyama step of a pair sharing `dw`.
pub fn step_em(
    state: (&[f64], &[f64]),
    legs: (&dyn Leg, &dyn Leg),
    dt: f64,
    dw: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let mut left = vec![0.0; state.0.len()];
    let mut right = vec![0.0; state.1.len()];
    legs.0.advance(state.0, dw, dt, &mut left)?;
    legs.1.advance(state.1, dw, dt, &mut right)?;
    if left.iter().chain(&right).any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite { what: "Euler-Maruyama step" });
    }
    Ok((left, right))
}

/// Monte-Carlo mean of |X_t − X′_t|^p with its standard error, per grid time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCurve {
    pub order: f64,
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
}

/// Both marginal clouds at one step; index i of each is trajectory pair i.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub pairs: PairedClouds,
}

#[derive(Debug, Clone)]
pub struct CoupledEnsemble {
    pub n_traj: usize,
    pub grid: TimeGrid,
    pub final_states: PairedClouds,
    pub moment_curves: Vec<MomentCurve>,
    pub snapshots: Vec<Snapshot>,
}

impl CoupledEnsemble {
    pub fn curve(&self, order: f64) -> Option<&MomentCurve> {
        self.moment_curves.iter().find(|c| c.order == order)
    }

    pub fn snapshot_at(&self, step: usize) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| s.step == step)
    }
}

/// Pairwise summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 16 {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

struct ChunkOutput {
    /// [time][order] → (Σ v, Σ v²).
    sums: Vec<(f64, f64)>,
    /// [snapshot] → (left coords, right coords).
    snaps: Vec<(Vec<f64>, Vec<f64>)>,
    final_left: Vec<f64>,
    final_right: Vec<f64>,
}

fn powered_gap(x: &[f64], y: &[f64], order: f64) -> f64 {
    crate::transport::ground_cost(x, y, order)
}

fn run_chunk(
    legs: (&dyn Leg, &dyn Leg),
    start: &PairedClouds,
    range: std::ops::Range<usize>,
    grid: &TimeGrid,
    orders: &[f64],
    rng: &RngStreamSpec,
) -> Result<ChunkOutput, SimulationError> {
    let d = start.dim();
    let m = range.len();
    let n_orders = orders.len();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut left: Vec<f64> = start.left.coords()[range.start * d..range.end * d].to_vec();
    let mut right: Vec<f64> = start.right.coords()[range.start * d..range.end * d].to_vec();
    let mut next_left = vec![0.0; m * d];
    let mut next_right = vec![0.0; m * d];
    let mut streams: Vec<GaussianStream> = range.clone().map(|i| rng.stream(i as u64)).collect();
    let mut dw = vec![0.0; d];
    let mut gaps = vec![0.0; m];
    let mut gaps_sq = vec![0.0; m];
    let mut sums = Vec::with_capacity((grid.n_steps() + 1) * n_orders);
    let mut snaps = Vec::with_capacity(grid.snapshot_indices().len());
    let mut snap_iter = grid.snapshot_indices().iter().peekable();

    let mut record = |step: usize, left: &[f64], right: &[f64], sums: &mut Vec<(f64, f64)>| {
        for &p in orders {
            for t in 0..m {
                let g = powered_gap(&left[t * d..(t + 1) * d], &right[t * d..(t + 1) * d], p);
                gaps[t] = g;
                gaps_sq[t] = g * g;
            }
            sums.push((pairwise_sum(&gaps), pairwise_sum(&gaps_sq)));
        }
        if snap_iter.peek() == Some(&&step) {
            snap_iter.next();
            snaps.push((left.to_vec(), right.to_vec()));
        }
    };

    record(0, &left, &right, &mut sums);
    for step in 1..=grid.n_steps() {
        for (t, stream) in streams.iter_mut().enumerate() {
            stream.fill_normal(&mut dw);
            for w in dw.iter_mut() {
                *w *= sqrt_dt;
            }
            let trajectory = range.start + t;
            let cell = t * d..(t + 1) * d;
            let wrap = |source| SimulationError::Model { trajectory, step, source };
            legs.0.advance(&left[cell.clone()], &dw, dt, &mut next_left[cell.clone()]).map_err(wrap)?;
            legs.1.advance(&right[cell.clone()], &dw, dt, &mut next_right[cell.clone()]).map_err(wrap)?;
            let escaped = next_left[cell.clone()]
                .iter()
                .chain(&next_right[cell])
                .any(|v| !v.is_finite() || v.abs() > BLOWUP_THRESHOLD);
            if escaped {
                return Err(SimulationError::Diverged { trajectory, step });
            }
        }
        std::mem::swap(&mut left, &mut next_left);
        std::mem::swap(&mut right, &mut next_right);
        record(step, &left, &right, &mut sums);
    }
    Ok(ChunkOutput { sums, snaps, final_left: left, final_right: right })
}

fn run_chunks(
    legs: (&dyn Leg, &dyn Leg),
    start: &PairedClouds,
    grid: &TimeGrid,
    orders: &[f64],
    rng: &RngStreamSpec,
) -> Result<Vec<ChunkOutput>, SimulationError> {
    let n = start.len();
    let ranges: Vec<std::ops::Range<usize>> = (0..n).step_by(CHUNK).map(|s| s..(s + CHUNK).min(n)).collect();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        ranges.into_par_iter().map(|r| run_chunk(legs, start, r, grid, orders, rng)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ranges.into_iter().map(|r| run_chunk(legs, start, r, grid, orders, rng)).collect()
    }
}

fn pairwise_reduce(parts: &[(f64, f64)]) -> (f64, f64) {
    if parts.len() == 1 {
        parts[0]
    } else {
        let mid = parts.len() / 2;
        let (a, b) = pairwise_reduce(&parts[..mid]);
        let (c, e) = pairwise_reduce(&parts[mid..]);
        (a + c, b + e)
    }
}

/// Simulates pairs driven by two legs that share every Brownian increment.
pub fn simulate_legs(
    legs: (&dyn Leg, &dyn Leg),
    start: &PairedClouds,
    grid: &TimeGrid,
    orders: &[f64],
    rng: &RngStreamSpec,
) -> Result<CoupledEnsemble, SimulationError> {
    if start.is_empty() {
        return Err(SimulationError::Input("no initial pairs".into()));
    }
    if start.dim() != legs.0.dim() || start.dim() != legs.1.dim() {
        return Err(SimulationError::Input(format!(
            "initial pairs have dimension {} but the model has dimension {}",
            start.dim(),
            legs.0.dim()
        )));
    }
    if let Some(p) = orders.iter().find(|p| !(p.is_finite() && **p >= 2.0)) {
        return Err(SimulationError::Input(format!("moment orders must be >= 2, got {p}")));
    }
    let chunks = run_chunks(legs, start, grid, orders, rng)?;
    let n = start.len();
    let nf = n as f64;
    let n_orders = orders.len();
    let n_times = grid.n_steps() + 1;

    let mut moment_curves: Vec<MomentCurve> = orders
        .iter()
        .map(|&order| MomentCurve { order, mean: Vec::with_capacity(n_times), std_err: Vec::with_capacity(n_times) })
        .collect();
    let mut parts = Vec::with_capacity(chunks.len());
    for k in 0..n_times {
        for (oi, curve) in moment_curves.iter_mut().enumerate() {
            parts.clear();
            parts.extend(chunks.iter().map(|c| c.sums[k * n_orders + oi]));
            let (s, s2) = pairwise_reduce(&parts);
            let mean = s / nf;
            let var = if n > 1 { ((s2 - s * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
            curve.mean.push(mean);
            curve.std_err.push((var / nf).sqrt());
        }
    }

    let d = start.dim();
    let concat = |f: &dyn Fn(&ChunkOutput) -> &Vec<f64>| -> Result<PointCloud, SimulationError> {
        let coords: Vec<f64> = chunks.iter().flat_map(|c| f(c).iter().copied()).collect();
        PointCloud::new(d, coords).map_err(|e| SimulationError::Input(e.to_string()))
    };
    let mut snapshots = Vec::with_capacity(grid.snapshot_indices().len());
    for (si, &step) in grid.snapshot_indices().iter().enumerate() {
        let left = concat(&|c: &ChunkOutput| &c.snaps[si].0)?;
        let right = concat(&|c: &ChunkOutput| &c.snaps[si].1)?;
        snapshots.push(Snapshot { step, time: grid.time(step), pairs: PairedClouds { left, right } });
    }
    let final_states = PairedClouds { left: concat(&|c| &c.final_left)?, right: concat(&|c| &c.final_right)? };
    Ok(CoupledEnsemble { n_traj: n, grid: grid.clone(), final_states, moment_curves, snapshots })
}

/// Synchronous coupling of dX = (b + ∇·A)(X, a)dt + √2σ(X, a)dB and the same
/// SDE at a′, σ = √A.
pub fn simulate_coupled(
    model: &dyn ParameterizedModel,
    a: &[f64],
    a_prime: &[f64],
    start: &PairedClouds,
    grid: &TimeGrid,
    orders: &[f64],
    rng: &RngStreamSpec,
) -> Result<CoupledEnsemble, SimulationError> {
    let left = ItoLeg::new(model, a)?;
    let right = ItoLeg::new(model, a_prime)?;
    simulate_legs((&left, &right), start, grid, orders, rng)
}

/// Synchronous coupling of dX = −∇V(X, a)dt + √(2/β)dB and the same SDE at
/// (a′, β′).
#[allow(clippy::too_many_arguments)]
pub fn simulate_langevin_coupled(
    model: &dyn LangevinModel,
    a: &[f64],
    a_prime: &[f64],
    beta: f64,
    beta_prime: f64,
    start: &PairedClouds,
    grid: &TimeGrid,
    orders: &[f64],
    rng: &RngStreamSpec,
) -> Result<CoupledEnsemble, SimulationError> {
    let left = LangevinLeg::new(model, a, beta)?;
    let right = LangevinLeg::new(model, a_prime, beta_prime)?;
    simulate_legs((&left, &right), start, grid, orders, rng)
}
