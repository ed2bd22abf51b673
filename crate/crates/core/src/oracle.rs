//! Closed-form ground truth for the gallery models.
//!
//! Nothing here calls into `simulate` or `transport`: these values are the
//! independent side of every cross-check.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("unsupported oracle case: {0}")]
    Unsupported(String),
    #[error("invalid oracle input: {0}")]
    Invalid(String),
    #[error("quadrature did not converge: error estimate {estimate:e} for value {value:e}")]
    Quadrature { value: f64, estimate: f64 },
}

/// N(mean, covariance).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianLaw {
    pub fn new(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self, OracleError> {
        let d = mean.len();
        if d == 0 || covariance.nrows() != d || covariance.ncols() != d {
            return Err(OracleError::Invalid("covariance shape must match the mean".into()));
        }
        if (&covariance - covariance.transpose()).amax() > 1e-12 {
            return Err(OracleError::Invalid("covariance is not symmetric".into()));
        }
        let min_eig = covariance.clone().symmetric_eigen().eigenvalues.min();
        if min_eig < -1e-12 {
            return Err(OracleError::Invalid(format!("covariance has negative eigenvalue {min_eig:e}")));
        }
        Ok(Self { mean, covariance })
    }

    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self, OracleError> {
        let d = mean.len();
        Self::new(mean, DMatrix::identity(d, d) * variance)
    }

    pub fn univariate(mean: f64, std: f64) -> Result<Self, OracleError> {
        Self::isotropic(vec![mean], std * std)
    }

    /// Point mass at `x`.
    pub fn dirac(x: Vec<f64>) -> Self {
        let d = x.len();
        Self { mean: x, covariance: DMatrix::zeros(d, d) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let q = &eig.eigenvectors;
    q * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt())) * q.transpose()
}

/// W₂² between Gaussians with commuting covariances:
/// |m₁ − m₂|² + ‖Σ₁^{1/2} − Σ₂^{1/2}‖_F².
pub fn gaussian_w2_squared(g1: &GaussianLaw, g2: &GaussianLaw) -> Result<f64, OracleError> {
    if g1.dim() != g2.dim() {
        return Err(OracleError::Invalid("laws live in different dimensions".into()));
    }
    let s1 = &g1.covariance;
    let s2 = &g2.covariance;
    let commutator = (s1 * s2 - s2 * s1).norm();
    if commutator > 1e-12 * (1.0 + s1.norm() * s2.norm()) {
        return Err(OracleError::Unsupported("non-commuting covariances (general Bures term)".into()));
    }
    let mean_part: f64 = g1.mean.iter().zip(&g2.mean).map(|(a, b)| (a - b) * (a - b)).sum();
    let cov_part = (psd_sqrt(s1) - psd_sqrt(s2)).norm_squared();
    Ok(mean_part + cov_part)
}

pub fn gaussian_w2(g1: &GaussianLaw, g2: &GaussianLaw) -> Result<f64, OracleError> {
    gaussian_w2_squared(g1, g2).map(f64::sqrt)
}

/// E|μ + σZ|^p for standard normal Z.
pub fn normal_abs_moment(mu: f64, sigma: f64, p: f64) -> Result<f64, OracleError> {
    if !(p.is_finite() && p >= 0.0) {
        return Err(OracleError::Invalid(format!("moment order must be nonnegative, got {p}")));
    }
    let sigma = sigma.abs();
    if sigma == 0.0 {
        return Ok(mu.abs().powf(p));
    }
    if mu == 0.0 {
        // σ^p 2^{p/2} Γ((p+1)/2)/√π.
        let log = p * sigma.ln() + 0.5 * p * std::f64::consts::LN_2 + ln_gamma(0.5 * (p + 1.0))
            - 0.5 * std::f64::consts::PI.ln();
        return Ok(log.exp());
    }
    // E|μ + σZ|^p = s^p E|μ/s + (σ/s)Z|^p with s = max(|μ|, σ), so the
    // integrand is O(1) and the tolerance is relative. The kink sits at
    // z₀ = −μ/σ; integrate the smooth pieces between unit-spaced breakpoints
    // on the bulk (wider pieces let the rule's error estimate go stale).
    // Mass beyond |z| = 40 is below e^{-800}.
    let s = mu.abs().max(sigma);
    let (m, sd) = (mu / s, sigma / s);
    let z0 = -mu / sigma;
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let f = |z: f64| (m + sd * z).abs().powf(p) * phi(z);
    let mut knots: Vec<f64> = (-12..=12).map(f64::from).chain([-40.0, 40.0]).collect();
    if z0.abs() < 40.0 && !knots.contains(&z0) {
        knots.push(z0);
    }
    knots.sort_by(f64::total_cmp);
    let target = 1e-15 * (m.abs() + 3.0 * sd).powf(p);
    let mut value = 0.0;
    let mut estimate = 0.0;
    for w in knots.windows(2) {
        let piece = quadrature::double_exponential::integrate(f, w[0], w[1], target);
        value += piece.integral;
        estimate += piece.error_estimate;
    }
    if !(value.is_finite() && estimate <= 1e-10 * value.abs()) {
        return Err(OracleError::Quadrature { value, estimate });
    }
    Ok(s.powf(p) * value)
}

/// W_p^p between N(m1, s1²) and N(m2, s2²) on the line:
/// E|Δm + (s1 − s2)Z|^p under the monotone coupling.
pub fn gaussian_wp_pow_1d(m1: f64, s1: f64, m2: f64, s2: f64, p: f64) -> Result<f64, OracleError> {
    if s1 < 0.0 || s2 < 0.0 {
        return Err(OracleError::Invalid("standard deviations must be nonnegative".into()));
    }
    if !(p.is_finite() && p >= 1.0) {
        return Err(OracleError::Invalid(format!("order must be >= 1, got {p}")));
    }
    normal_abs_moment(m1 - m2, s1 - s2, p)
}

/// W_p between N(m1, s1²) and N(m2, s2²) on the line.
pub fn gaussian_wp_1d(m1: f64, s1: f64, m2: f64, s2: f64, p: f64) -> Result<f64, OracleError> {
    if s1 == s2 {
        if s1 < 0.0 {
            return Err(OracleError::Invalid("standard deviations must be nonnegative".into()));
        }
        return Ok((m1 - m2).abs());
    }
    gaussian_wp_pow_1d(m1, s1, m2, s2, p).map(|v| v.powf(1.0 / p))
}

/// Per-coordinate OU coefficients dX = −k(X − target)dt + s·dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    pub k: f64,
    pub target: Vec<f64>,
    pub noise: f64,
}

/// Exact marginal law of an OU process started from a Gaussian law.
pub fn ou_marginal(params: &OuParams, x0: &GaussianLaw, t: f64) -> Result<GaussianLaw, OracleError> {
    if params.k.is_nan() || params.k <= 0.0 || t < 0.0 {
        return Err(OracleError::Invalid("OU marginal needs k > 0 and t >= 0".into()));
    }
    if params.target.len() != x0.dim() {
        return Err(OracleError::Invalid("target dimension mismatch".into()));
    }
    let decay = (-params.k * t).exp();
    let mean = x0.mean.iter().zip(&params.target).map(|(m, a)| a + (m - a) * decay).collect();
    let added = params.noise * params.noise * -(-2.0 * params.k * t).exp_m1() / (2.0 * params.k);
    let d = x0.dim();
    let covariance = &x0.covariance * (decay * decay) + DMatrix::identity(d, d) * added;
    Ok(GaussianLaw { mean, covariance })
}

/// Gallery identifiers with closed-form coupled gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum GapModel {
    /// b = 0, A = aI.
    Heat,
    /// b = −k(x − a𝟙), A = ½σ²I (same σ on both legs).
    Ou { k: f64, sigma: f64 },
    /// V = (k/2)|x − a𝟙|² with inverse temperatures β, β′.
    LangevinQuadratic { k: f64, beta: f64, beta_prime: f64 },
    /// V = (k/2)|x|² + log cosh(x₁) + a·x₁: no closed form.
    LangevinLogCosh,
}

/// Inputs of [`coupled_gap_oracle`]; both legs start at point masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapQuery {
    pub model: GapModel,
    pub dim: usize,
    pub a: f64,
    pub a_prime: f64,
    pub x0: Vec<f64>,
    pub x0_prime: Vec<f64>,
    pub p: f64,
    pub t: f64,
}

/// E|X_t − X′_t|^p of the synchronous coupling, in closed form.
///
/// For the gallery cases here the coupling is optimal, so this is also the
/// exact W_p^p between the two marginals.
pub fn coupled_gap_oracle(q: &GapQuery) -> Result<f64, OracleError> {
    if q.x0.len() != q.dim || q.x0_prime.len() != q.dim {
        return Err(OracleError::Invalid("start points must have the model dimension".into()));
    }
    if q.t < 0.0 {
        return Err(OracleError::Invalid("time must be nonnegative".into()));
    }
    let d = q.dim as f64;
    let offset: Vec<f64> = q.x0.iter().zip(&q.x0_prime).map(|(a, b)| a - b).collect();
    let offset_sq: f64 = offset.iter().map(|v| v * v).sum();
    match &q.model {
        GapModel::Heat => {
            if q.a <= 0.0 || q.a_prime <= 0.0 {
                return Err(OracleError::Invalid("heat coefficients must be positive".into()));
            }
            // X − X′ = offset + (√(2a) − √(2a′))B_t.
            let ds = (2.0 * q.a).sqrt() - (2.0 * q.a_prime).sqrt();
            if offset_sq == 0.0 {
                if ds == 0.0 || q.t == 0.0 {
                    return Ok(0.0);
                }
                // E|B_t|^p = (2t)^{p/2} Γ((d+p)/2)/Γ(d/2).
                let log = q.p * ds.abs().ln()
                    + 0.5 * q.p * (2.0 * q.t).ln()
                    + ln_gamma(0.5 * (d + q.p))
                    - ln_gamma(0.5 * d);
                Ok(log.exp())
            } else if q.dim == 1 {
                normal_abs_moment(offset[0], ds * q.t.sqrt(), q.p)
            } else {
                Err(OracleError::Unsupported("heat gap with distinct starts in d > 1".into()))
            }
        }
        GapModel::Ou { k, .. } => gaussian_gap(*k, q, &offset, 0.0, 0.0),
        GapModel::LangevinQuadratic { k, beta, beta_prime } => {
            if *beta <= 0.0 || *beta_prime <= 0.0 {
                return Err(OracleError::Invalid("inverse temperatures must be positive".into()));
            }
            gaussian_gap(*k, q, &offset, (2.0 / beta).sqrt(), (2.0 / beta_prime).sqrt())
        }
        GapModel::LangevinLogCosh => Err(OracleError::Unsupported("log-cosh potential has no closed form".into())),
    }
}

/// Joint covariance of one coordinate pair (X_i, X′_i) driven by noises
/// (s, s′) on a shared Brownian motion, from point-mass starts:
/// dΣ/dt = −2kΣ + vvᵀ with v = (s, s′).
pub fn joint_covariance(k: f64, s: f64, s_prime: f64, t: f64) -> [[f64; 2]; 2] {
    let w = -(-2.0 * k * t).exp_m1() / (2.0 * k);
    [[s * s * w, s * s_prime * w], [s * s_prime * w, s_prime * s_prime * w]]
}

fn gaussian_gap(k: f64, q: &GapQuery, offset: &[f64], s: f64, s_prime: f64) -> Result<f64, OracleError> {
    if k.is_nan() || k <= 0.0 {
        return Err(OracleError::Invalid("rate k must be positive".into()));
    }
    // Mean gap solves m′ = −k m + k(a − a′) per coordinate.
    let decay = (-k * q.t).exp();
    let drive = (q.a - q.a_prime) * -(-k * q.t).exp_m1();
    let mean: Vec<f64> = offset.iter().map(|o| o * decay + drive).collect();
    let mean_sq: f64 = mean.iter().map(|v| v * v).sum();
    let cov = joint_covariance(k, s, s_prime, q.t);
    let var = (cov[0][0] + cov[1][1] - 2.0 * cov[0][1]).max(0.0);
    if var == 0.0 {
        return Ok(mean_sq.powf(0.5 * q.p));
    }
    if q.p == 2.0 {
        return Ok(mean_sq + q.dim as f64 * var);
    }
    if q.dim == 1 {
        return normal_abs_moment(mean[0], var.sqrt(), q.p);
    }
    Err(OracleError::Unsupported("noise-mismatch gap for p != 2 in d > 1".into()))
}
