//! Parameterized drift/diffusion problems and the matrix utilities the
//! coupling simulator needs.
//!
//! A [`ParameterizedModel`] describes the Itô diffusion whose law solves the
//! Fokker-Planck equation
//!
//! ```text
//! ∂ₜρ = ∇·(A(x,a)∇ρ) − ∇·(ρ b(x,a))
//! ```
//!
//! together with the hypothesis constants (L₁, L₂, m, C) that the sensitivity
//! bounds consume. A [`LangevinModel`] describes the overdamped Langevin
//! family driven by a parameterized potential V(x, a).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance on |Aᵢⱼ − Aⱼᵢ| accepted as "symmetric".
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: max |A_ij - A_ji| = {asymmetry:e}")]
    NotSymmetric { asymmetry: f64 },
    #[error("ellipticity violated: eigenvalue {eigenvalue:e} is not positive")]
    Ellipticity { eigenvalue: f64 },
    #[error("model evaluation produced a non-finite value in `{what}`")]
    NonFinite { what: &'static str },
    #[error("invalid hypothesis constants: {0}")]
    InvalidConstants(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
}

/// Declared constants of the well-posedness hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisConstants {
    /// Joint Lipschitz constant of b and A (Frobenius) in (x, a).
    pub l1: f64,
    /// Lipschitz constant of ∇·A in (x, a).
    pub l2: f64,
    /// Ellipticity floor, λ_min(A) ≥ m.
    pub m: f64,
    /// Linear growth constant, |b| + ‖A‖_F ≤ C(1 + |x|).
    pub c: f64,
}

impl HypothesisConstants {
    pub fn new(l1: f64, l2: f64, m: f64, c: f64) -> Result<Self, ModelError> {
        let all = [l1, l2, m, c];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidConstants("all constants must be finite".into()));
        }
        if l1 < 0.0 || l2 < 0.0 {
            return Err(ModelError::InvalidConstants("L1 and L2 must be nonnegative".into()));
        }
        if m <= 0.0 {
            return Err(ModelError::InvalidConstants(format!("m must be positive, got {m}")));
        }
        if c <= 0.0 {
            return Err(ModelError::InvalidConstants(format!("C must be positive, got {c}")));
        }
        Ok(Self { l1, l2, m, c })
    }
}

/// Drift b(x, a) and diffusion A(x, a) of a parameterized Fokker-Planck flow.
///
/// Implementations must be pure functions of `(x, a)`.
pub trait ParameterizedModel: Send + Sync {
    fn dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    /// Writes b(x, a) into `out`.
    fn drift(&self, x: &[f64], a: &[f64], out: &mut [f64]);
    /// Symmetric positive-definite A(x, a).
    fn diffusion(&self, x: &[f64], a: &[f64]) -> DMatrix<f64>;
    /// Analytic (∇·A)ᵢ = Σⱼ ∂ⱼAᵢⱼ, if the model provides one.
    fn divergence_of_diffusion(&self, _x: &[f64], _a: &[f64]) -> Option<Vec<f64>> {
        None
    }
    /// True when A does not depend on x; the simulator then factors σ once.
    fn diffusion_is_state_independent(&self) -> bool {
        false
    }
    fn constants(&self) -> HypothesisConstants;
}

/// Potential gradient ∇ₓV(x, a) of an overdamped Langevin family.
pub trait LangevinModel: Send + Sync {
    fn dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn grad_potential(&self, x: &[f64], a: &[f64], out: &mut [f64]);
    /// Strong-convexity modulus k.
    fn convexity(&self) -> f64;
    /// Parameter-Lipschitz constant L₃ of ∇ₓV.
    fn param_lipschitz(&self) -> f64;
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Validates symmetry and returns the symmetrized copy (A + Aᵀ)/2.
pub fn symmetrize(a: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
    if a.nrows() != a.ncols() {
        return Err(ModelError::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite { what: "matrix" });
    }
    let asymmetry = max_asymmetry(a);
    if asymmetry > SYMMETRY_TOL {
        return Err(ModelError::NotSymmetric { asymmetry });
    }
    Ok((a + a.transpose()) * 0.5)
}

/// Principal square root of a symmetric positive-definite matrix, computed
/// from the symmetric eigendecomposition A = QΛQᵀ as QΛ^{1/2}Qᵀ.
pub fn spd_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
    let sym = symmetrize(a)?;
    let n = sym.nrows();
    if n == 1 {
        let v = sym[(0, 0)];
        if v <= 0.0 {
            return Err(ModelError::Ellipticity { eigenvalue: v });
        }
        return Ok(DMatrix::from_element(1, 1, v.sqrt()));
    }
    let eig = sym.symmetric_eigen();
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&l| l <= 0.0) {
        return Err(ModelError::Ellipticity { eigenvalue: bad });
    }
    let q = &eig.eigenvectors;
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let b = q * root * q.transpose();
    // Re-symmetrize away the rounding of the two products.
    Ok((&b + b.transpose()) * 0.5)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> Result<f64, ModelError> {
    let sym = symmetrize(a)?;
    Ok(sym.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Singular values sorted in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Right-hand side Σᵢ σᵢ(X)σᵢ(Y) of von Neumann's trace inequality.
pub fn von_neumann_bound(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    singular_values(x).iter().zip(singular_values(y)).map(|(a, b)| a * b).sum()
}

/// Central finite-difference step for coordinate value `xj`.
pub fn fd_step(xj: f64) -> f64 {
    (1e-5 * xj.abs()).max(1e-5)
}

/// (∇·A)ᵢ = Σⱼ ∂ⱼAᵢⱼ by central differences, one column per coordinate.
pub fn divergence_fd(model: &dyn ParameterizedModel, x: &[f64], a: &[f64]) -> Vec<f64> {
    let d = model.dim();
    let mut out = vec![0.0; d];
    let mut probe = x.to_vec();
    for j in 0..d {
        let h = fd_step(x[j]);
        probe[j] = x[j] + h;
        let plus = model.diffusion(&probe, a);
        probe[j] = x[j] - h;
        let minus = model.diffusion(&probe, a);
        probe[j] = x[j];
        for (i, o) in out.iter_mut().enumerate() {
            *o += (plus[(i, j)] - minus[(i, j)]) / (2.0 * h);
        }
    }
    out
}

/// ∇·A(x, a), analytic when available.
pub fn divergence(model: &dyn ParameterizedModel, x: &[f64], a: &[f64]) -> Vec<f64> {
    if model.diffusion_is_state_independent() {
        return vec![0.0; model.dim()];
    }
    model.divergence_of_diffusion(x, a).unwrap_or_else(|| divergence_fd(model, x, a))
}

/// Itô drift b(x, a) + ∇·A(x, a) of the particle representation.
pub fn effective_drift(model: &dyn ParameterizedModel, x: &[f64], a: &[f64]) -> Result<Vec<f64>, ModelError> {
    check_dims(model.dim(), model.param_dim(), x, a)?;
    if x.iter().chain(a).any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite { what: "input" });
    }
    let mut out = vec![0.0; model.dim()];
    model.drift(x, a, &mut out);
    for (o, dv) in out.iter_mut().zip(divergence(model, x, a)) {
        *o += dv;
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite { what: "effective drift" });
    }
    Ok(out)
}

fn check_dims(dim: usize, param_dim: usize, x: &[f64], a: &[f64]) -> Result<(), ModelError> {
    if x.len() != dim {
        return Err(ModelError::Dimension { expected: dim, got: x.len() });
    }
    if a.len() != param_dim {
        return Err(ModelError::Dimension { expected: param_dim, got: a.len() });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Hypothesis probing

/// Where and how densely the hypotheses are probed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub n_pairs: usize,
    /// States are drawn uniformly from [−R, R]^d.
    pub box_radius: f64,
    /// Parameters are drawn uniformly from the box [param_lo, param_hi].
    pub param_lo: Vec<f64>,
    pub param_hi: Vec<f64>,
    pub seed: u64,
}

impl ProbeSpec {
    /// Probe box spanned by two parameter vectors.
    pub fn between(a: &[f64], a_prime: &[f64], n_pairs: usize, box_radius: f64, seed: u64) -> Self {
        let param_lo = a.iter().zip(a_prime).map(|(x, y)| x.min(*y)).collect();
        let param_hi = a.iter().zip(a_prime).map(|(x, y)| x.max(*y)).collect();
        Self { n_pairs, box_radius, param_lo, param_hi, seed }
    }
}

/// A pair of probe points at which a quotient was observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeWitness {
    pub x: Vec<f64>,
    pub a: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub a_prime: Vec<f64>,
    pub value: f64,
}

/// One hypothesis compared against its declared constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeCheck {
    pub name: String,
    pub declared: f64,
    pub observed: f64,
    pub passed: bool,
    pub witness: Option<ProbeWitness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub n_pairs: usize,
    pub max_drift_quotient: f64,
    pub max_diffusion_quotient: f64,
    pub max_divergence_quotient: f64,
    pub min_eigenvalue: f64,
    pub max_growth_ratio: f64,
    pub max_asymmetry: f64,
    pub checks: Vec<ProbeCheck>,
    pub passed: bool,
}

impl ProbeReport {
    pub fn failures(&self) -> impl Iterator<Item = &ProbeCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

const PROBE_TOL: f64 = 1e-9;

fn sample_box(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(l, h)| if h > l { rng.random_range(*l..*h) } else { *l })
        .collect()
}

#[derive(Default)]
struct Running {
    value: f64,
    witness: Option<ProbeWitness>,
}

impl Running {
    fn offer(&mut self, value: f64, make: impl FnOnce() -> ProbeWitness) {
        if self.witness.is_none() || value > self.value {
            self.value = value;
            self.witness = Some(ProbeWitness { value, ..make() });
        }
    }
}

fn check(name: &str, declared: f64, observed: f64, upper: bool, witness: Option<ProbeWitness>) -> ProbeCheck {
    let tol = PROBE_TOL * (1.0 + declared.abs());
    let passed = if upper { observed <= declared + tol } else { observed >= declared - tol };
    ProbeCheck { name: name.to_string(), declared, observed, passed, witness: if passed { None } else { witness } }
}

/// Samples `spec.n_pairs` pairs (x, a), (x′, a′) and compares the observed
/// difference quotients, ellipticity, growth and symmetry with the declared
/// [`HypothesisConstants`].
///
/// Lipschitz quotients are taken jointly, |f(x,a) − f(x′,a′)| / (|x − x′| + |a − a′|),
/// and the diffusion difference is measured in the Frobenius norm.
pub fn probe_constants(model: &dyn ParameterizedModel, spec: &ProbeSpec) -> ProbeReport {
    let d = model.dim();
    let declared = model.constants();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let x_lo = vec![-spec.box_radius; d];
    let x_hi = vec![spec.box_radius; d];
    let mut drift_q = Running::default();
    let mut diff_q = Running::default();
    let mut div_q = Running::default();
    let mut growth = Running::default();
    let mut asym = Running::default();
    let mut min_eig = f64::INFINITY;
    let mut eig_witness = None;
    let mut b1 = vec![0.0; d];
    let mut b2 = vec![0.0; d];
    for _ in 0..spec.n_pairs.max(1) {
        let x = sample_box(&mut rng, &x_lo, &x_hi);
        let a = sample_box(&mut rng, &spec.param_lo, &spec.param_hi);
        let xp = sample_box(&mut rng, &x_lo, &x_hi);
        let ap = sample_box(&mut rng, &spec.param_lo, &spec.param_hi);
        let witness = || ProbeWitness { x: x.clone(), a: a.clone(), x_prime: xp.clone(), a_prime: ap.clone(), value: 0.0 };
        let denom = dist(&x, &xp) + dist(&a, &ap);

        model.drift(&x, &a, &mut b1);
        model.drift(&xp, &ap, &mut b2);
        let m1 = model.diffusion(&x, &a);
        let m2 = model.diffusion(&xp, &ap);
        if denom > 0.0 {
            drift_q.offer(dist(&b1, &b2) / denom, witness);
            diff_q.offer((&m1 - &m2).norm() / denom, witness);
            let g1 = divergence(model, &x, &a);
            let g2 = divergence(model, &xp, &ap);
            div_q.offer(dist(&g1, &g2) / denom, witness);
        }
        asym.offer(max_asymmetry(&m1), witness);
        growth.offer((norm(&b1) + m1.norm()) / (1.0 + norm(&x)), witness);
        let lam = symmetrize(&m1)
            .map(|s| s.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
            .unwrap_or(f64::NEG_INFINITY);
        if lam < min_eig {
            min_eig = lam;
            eig_witness = Some(ProbeWitness { x_prime: x.clone(), a_prime: a.clone(), value: lam, ..witness() });
        }
    }
    let checks = vec![
        check("L1 (drift)", declared.l1, drift_q.value, true, drift_q.witness.clone()),
        check("L1 (diffusion)", declared.l1, diff_q.value, true, diff_q.witness.clone()),
        check("L2 (divergence of A)", declared.l2, div_q.value, true, div_q.witness.clone()),
        check("m (ellipticity)", declared.m, min_eig, false, eig_witness),
        check("C (linear growth)", declared.c, growth.value, true, growth.witness.clone()),
        ProbeCheck {
            name: "symmetry of A".into(),
            declared: SYMMETRY_TOL,
            observed: asym.value,
            passed: asym.value <= SYMMETRY_TOL,
            witness: if asym.value <= SYMMETRY_TOL { None } else { asym.witness.clone() },
        },
    ];
    let passed = checks.iter().all(|c| c.passed);
    ProbeReport {
        n_pairs: spec.n_pairs.max(1),
        max_drift_quotient: drift_q.value,
        max_diffusion_quotient: diff_q.value,
        max_divergence_quotient: div_q.value,
        min_eigenvalue: min_eig,
        max_growth_ratio: growth.value,
        max_asymmetry: asym.value,
        checks,
        passed,
    }
}

/// Probes strong convexity ⟨∇V(x,a) − ∇V(y,a), x − y⟩ ≥ k|x − y|² and the
/// parameter quotient |∇V(x,a) − ∇V(x,a′)| / |a − a′| ≤ L₃.
///
/// In the returned report `min_eigenvalue` holds the smallest observed
/// monotonicity ratio and `max_drift_quotient` the largest parameter quotient;
/// the diffusion fields are zero.
pub fn probe_langevin(model: &dyn LangevinModel, spec: &ProbeSpec) -> ProbeReport {
    let d = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let x_lo = vec![-spec.box_radius; d];
    let x_hi = vec![spec.box_radius; d];
    let mut param_q = Running::default();
    let mut min_mono = f64::INFINITY;
    let mut mono_witness = None;
    let mut g1 = vec![0.0; d];
    let mut g2 = vec![0.0; d];
    for _ in 0..spec.n_pairs.max(1) {
        let x = sample_box(&mut rng, &x_lo, &x_hi);
        let y = sample_box(&mut rng, &x_lo, &x_hi);
        let a = sample_box(&mut rng, &spec.param_lo, &spec.param_hi);
        let ap = sample_box(&mut rng, &spec.param_lo, &spec.param_hi);

        model.grad_potential(&x, &a, &mut g1);
        model.grad_potential(&y, &a, &mut g2);
        let dx2: f64 = x.iter().zip(&y).map(|(u, v)| (u - v) * (u - v)).sum();
        if dx2 > 0.0 {
            let inner: f64 = g1.iter().zip(&g2).zip(x.iter().zip(&y)).map(|((p, q), (u, v))| (p - q) * (u - v)).sum();
            let ratio = inner / dx2;
            if ratio < min_mono {
                min_mono = ratio;
                mono_witness =
                    Some(ProbeWitness { x: x.clone(), a: a.clone(), x_prime: y.clone(), a_prime: a.clone(), value: ratio });
            }
        }
        let da = dist(&a, &ap);
        if da > 0.0 {
            model.grad_potential(&x, &ap, &mut g2);
            param_q.offer(dist(&g1, &g2) / da, || ProbeWitness {
                x: x.clone(),
                a: a.clone(),
                x_prime: x.clone(),
                a_prime: ap.clone(),
                value: 0.0,
            });
        }
    }
    if !min_mono.is_finite() {
        min_mono = model.convexity();
    }
    let checks = vec![
        check("k (strong convexity)", model.convexity(), min_mono, false, mono_witness),
        check("L3 (parameter Lipschitz)", model.param_lipschitz(), param_q.value, true, param_q.witness.clone()),
    ];
    let passed = checks.iter().all(|c| c.passed);
    ProbeReport {
        n_pairs: spec.n_pairs.max(1),
        max_drift_quotient: param_q.value,
        max_diffusion_quotient: 0.0,
        max_divergence_quotient: 0.0,
        min_eigenvalue: min_mono,
        max_growth_ratio: 0.0,
        max_asymmetry: 0.0,
        checks,
        passed,
    }
}

// ---------------------------------------------------------------------------
// Gallery

/// Heat flow with constant isotropic diffusion: b = 0, A = a·I, a = params[0] > 0.
#[derive(Debug, Clone)]
pub struct HeatFlow {
    pub dim: usize,
    pub constants: HypothesisConstants,
}

impl HeatFlow {
    /// Constants that hold for every parameter between `a` and `a_prime`:
    /// ‖aI − a′I‖_F = √d|a − a′|, λ_min = min(a, a′).
    pub fn for_params(dim: usize, a: f64, a_prime: f64) -> Result<Self, ModelError> {
        if a <= 0.0 || a_prime <= 0.0 {
            return Err(ModelError::InvalidParameter(format!(
                "heat-flow diffusion coefficients must be positive, got {a} and {a_prime}"
            )));
        }
        let sd = (dim as f64).sqrt();
        let constants = HypothesisConstants::new(sd, 0.0, a.min(a_prime), sd * a.max(a_prime))?;
        Ok(Self { dim, constants })
    }

    pub fn with_constants(mut self, constants: HypothesisConstants) -> Self {
        self.constants = constants;
        self
    }
}

impl ParameterizedModel for HeatFlow {
    fn dim(&self) -> usize {
        self.dim
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn drift(&self, _x: &[f64], _a: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn diffusion(&self, _x: &[f64], a: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) * a[0]
    }
    fn divergence_of_diffusion(&self, _x: &[f64], _a: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; self.dim])
    }
    fn diffusion_is_state_independent(&self) -> bool {
        true
    }
    fn constants(&self) -> HypothesisConstants {
        self.constants
    }
}

/// Ornstein-Uhlenbeck shift: b = −k(x − a·𝟙), A = ½σ²I.
#[derive(Debug, Clone)]
pub struct OuShift {
    pub dim: usize,
    pub k: f64,
    pub sigma: f64,
    pub constants: HypothesisConstants,
}

impl OuShift {
    pub fn for_params(dim: usize, k: f64, sigma: f64, a: f64, a_prime: f64) -> Result<Self, ModelError> {
        if k <= 0.0 || sigma <= 0.0 {
            return Err(ModelError::InvalidParameter(format!(
                "OU rate and noise must be positive, got k = {k}, sigma = {sigma}"
            )));
        }
        let sd = (dim as f64).sqrt();
        let half_var = 0.5 * sigma * sigma;
        // |b(x,a) − b(x′,a′)| ≤ k|x − x′| + k√d|a − a′|.
        let l1 = k * sd.max(1.0);
        let c = k.max(k * sd * a.abs().max(a_prime.abs()) + sd * half_var);
        let constants = HypothesisConstants::new(l1, 0.0, half_var, c)?;
        Ok(Self { dim, k, sigma, constants })
    }

    pub fn with_constants(mut self, constants: HypothesisConstants) -> Self {
        self.constants = constants;
        self
    }
}

impl ParameterizedModel for OuShift {
    fn dim(&self) -> usize {
        self.dim
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn drift(&self, x: &[f64], a: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = -self.k * (xi - a[0]);
        }
    }
    fn diffusion(&self, _x: &[f64], _a: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) * (0.5 * self.sigma * self.sigma)
    }
    fn divergence_of_diffusion(&self, _x: &[f64], _a: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; self.dim])
    }
    fn diffusion_is_state_independent(&self) -> bool {
        true
    }
    fn constants(&self) -> HypothesisConstants {
        self.constants
    }
}

/// Quadratic potential V = (k/2)|x − a·𝟙|².
#[derive(Debug, Clone)]
pub struct QuadraticPotential {
    pub dim: usize,
    pub k: f64,
    pub l3: f64,
}

impl QuadraticPotential {
    pub fn new(dim: usize, k: f64) -> Result<Self, ModelError> {
        if k <= 0.0 {
            return Err(ModelError::InvalidParameter(format!("convexity k must be positive, got {k}")));
        }
        Ok(Self { dim, k, l3: k * (dim as f64).sqrt() })
    }
}

impl LangevinModel for QuadraticPotential {
    fn dim(&self) -> usize {
        self.dim
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn grad_potential(&self, x: &[f64], a: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.k * (xi - a[0]);
        }
    }
    fn convexity(&self) -> f64 {
        self.k
    }
    fn param_lipschitz(&self) -> f64 {
        self.l3
    }
}

/// Non-quadratic potential V = (k/2)|x|² + log cosh(x₁) + a·x₁.
///
/// The Hessian is kI + sech²(x₁)e₁e₁ᵀ ⪰ kI and ∂ₐ∇V = e₁, so k and L₃ = 1 hold
/// globally.
#[derive(Debug, Clone)]
pub struct LogCoshPotential {
    pub dim: usize,
    pub k: f64,
}

impl LogCoshPotential {
    pub fn new(dim: usize, k: f64) -> Result<Self, ModelError> {
        if k <= 0.0 {
            return Err(ModelError::InvalidParameter(format!("convexity k must be positive, got {k}")));
        }
        Ok(Self { dim, k })
    }
}

impl LangevinModel for LogCoshPotential {
    fn dim(&self) -> usize {
        self.dim
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn grad_potential(&self, x: &[f64], a: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.k * xi;
        }
        out[0] += x[0].tanh() + a[0];
    }
    fn convexity(&self) -> f64 {
        self.k
    }
    fn param_lipschitz(&self) -> f64 {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// A(x) = diag(1 + x₁², 1), b = 0, no analytic divergence.
    struct Bumpy;

    impl ParameterizedModel for Bumpy {
        fn dim(&self) -> usize {
            2
        }
        fn param_dim(&self) -> usize {
            1
        }
        fn drift(&self, _x: &[f64], _a: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
        fn diffusion(&self, x: &[f64], _a: &[f64]) -> DMatrix<f64> {
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0 + x[0] * x[0], 1.0]))
        }
        fn constants(&self) -> HypothesisConstants {
            HypothesisConstants::new(1.0, 1.0, 1.0, 1.0).unwrap()
        }
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_abs_diff_eq!(spd_sqrt(&id).unwrap(), id, epsilon = 1e-15);
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0]);
        let expect = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        assert_abs_diff_eq!(spd_sqrt(&a).unwrap(), expect, epsilon = 1e-14);
    }

    #[test]
    fn sqrt_rejects_asymmetric_and_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(spd_sqrt(&a), Err(ModelError::NotSymmetric { .. })));
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match spd_sqrt(&b) {
            Err(ModelError::Ellipticity { eigenvalue }) => assert_abs_diff_eq!(eigenvalue, -1.0, epsilon = 1e-12),
            other => panic!("expected ellipticity error, got {other:?}"),
        }
        let c = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert!(matches!(spd_sqrt(&c), Err(ModelError::Ellipticity { .. })));
    }

    #[test]
    fn sqrt_accepts_tiny_asymmetry() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5 + 1e-13, 2.0]);
        let b = spd_sqrt(&a).unwrap();
        assert!((&b * &b - &a).norm() < 1e-12);
    }

    #[test]
    fn effective_drift_constant_diffusion_is_pure_drift() {
        let heat = HeatFlow::for_params(3, 0.5, 2.0).unwrap();
        assert_eq!(effective_drift(&heat, &[1.0, 2.0, 3.0], &[0.7]).unwrap(), vec![0.0; 3]);
        let ou = OuShift::for_params(1, 1.0, 2f64.sqrt(), 0.0, 1.0).unwrap();
        assert_eq!(effective_drift(&ou, &[0.3], &[0.3]).unwrap(), vec![0.0]);
    }

    #[test]
    fn effective_drift_by_finite_differences() {
        // ∂₁A₁₁ = 2x₁ = 2 at x = (1, 0).
        let v = effective_drift(&Bumpy, &[1.0, 0.0], &[0.0]).unwrap();
        assert_abs_diff_eq!(v[0], 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(v[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn effective_drift_checks_dimensions() {
        assert!(matches!(
            effective_drift(&Bumpy, &[1.0], &[0.0]),
            Err(ModelError::Dimension { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn probe_trivial_model_passes() {
        struct Flat;
        impl ParameterizedModel for Flat {
            fn dim(&self) -> usize {
                2
            }
            fn param_dim(&self) -> usize {
                1
            }
            fn drift(&self, _x: &[f64], _a: &[f64], out: &mut [f64]) {
                out.fill(0.0);
            }
            fn diffusion(&self, _x: &[f64], _a: &[f64]) -> DMatrix<f64> {
                DMatrix::identity(2, 2)
            }
            fn diffusion_is_state_independent(&self) -> bool {
                true
            }
            fn constants(&self) -> HypothesisConstants {
                HypothesisConstants::new(0.0, 0.0, 1.0, 2f64.sqrt()).unwrap()
            }
        }
        let spec = ProbeSpec::between(&[-1.0], &[1.0], 200, 3.0, 7);
        let r = probe_constants(&Flat, &spec);
        assert_eq!(r.max_drift_quotient, 0.0);
        assert_eq!(r.max_diffusion_quotient, 0.0);
        assert_eq!(r.max_divergence_quotient, 0.0);
        assert_abs_diff_eq!(r.min_eigenvalue, 1.0, epsilon = 1e-14);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn probe_ou_lipschitz() {
        let ou = OuShift::for_params(1, 1.0, 2f64.sqrt(), -2.0, 2.0).unwrap();
        let spec = ProbeSpec::between(&[-2.0], &[2.0], 2000, 4.0, 11);
        let r = probe_constants(&ou, &spec);
        assert!(r.max_drift_quotient <= 1.0 + 1e-9);
        assert!(r.passed, "{:?}", r.failures().collect::<Vec<_>>());

        let tight = HypothesisConstants { l1: 0.5, ..ou.constants };
        let r = probe_constants(&ou.clone().with_constants(tight), &spec);
        assert!(!r.passed);
        let fail = r.failures().next().unwrap();
        assert!(fail.name.starts_with("L1"));
        let w = fail.witness.as_ref().unwrap();
        assert!(w.value > 0.5);
        assert!(w.x != w.x_prime);
    }

    #[test]
    fn probe_langevin_gallery() {
        let spec = ProbeSpec::between(&[-1.0], &[1.0], 500, 3.0, 3);
        assert!(probe_langevin(&QuadraticPotential::new(2, 1.5).unwrap(), &spec).passed);
        assert!(probe_langevin(&LogCoshPotential::new(3, 0.7).unwrap(), &spec).passed);
    }

    #[test]
    fn heat_rejects_nonpositive_params() {
        assert!(HeatFlow::for_params(1, 0.0, 1.0).is_err());
        assert!(HypothesisConstants::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(HypothesisConstants::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
    }
}
