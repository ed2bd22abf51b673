//! Explicit Grönwall envelopes for W_p^p between two parameterized flows.
//!
//! General Fokker-Planck flows obey
//!
//! ```text
//! d/dt E ≤ C₁E + C₂|Δa|^p,   C₁ = (L₁+L₂)(2p−1) + L₁²(p−1)²/(2m),
//!                            C₂ = L₁ + L₂ + L₁²(p−1)/(2m),
//! ```
//!
//! and strongly convex Langevin flows obey d/dt E ≤ −λE + K₁|Δa|^p + K₂|Δσ|^p
//! with λ = pk/2. Both integrate to closed-form envelopes evaluated here.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported Wasserstein order; (4(p−1))^{p−1} overflows soon after.
pub const MAX_ORDER: f64 = 32.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("ellipticity constant m must be positive, got {0}")]
    Ellipticity(f64),
    #[error("convexity modulus k must be positive, got {0}")]
    Convexity(f64),
    #[error("order p = {0} outside the supported range [2, 32]")]
    OrderOutOfRange(f64),
    #[error("invalid bound input: {0}")]
    Invalid(String),
}

fn check_order(p: f64) -> Result<(), BoundsError> {
    if p.is_finite() && (2.0..=MAX_ORDER).contains(&p) {
        Ok(())
    } else {
        Err(BoundsError::OrderOutOfRange(p))
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<(), BoundsError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(BoundsError::Invalid(format!("{name} must be finite and nonnegative, got {v}")))
    }
}

/// x^e, through `powi` when e is integral so integer inputs stay exact.
pub(crate) fn pow(x: f64, e: f64) -> f64 {
    if e.fract() == 0.0 && e.abs() < i32::MAX as f64 {
        x.powi(e as i32)
    } else {
        x.powf(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Constants {
    pub c1: f64,
    pub c2: f64,
    pub l1: f64,
    pub l2: f64,
    pub m: f64,
    pub p: f64,
}

/// (C₁, C₂) of the general sensitivity envelope.
pub fn theorem1_constants(l1: f64, l2: f64, m: f64, p: f64) -> Result<Theorem1Constants, BoundsError> {
    if !(m.is_finite() && m > 0.0) {
        return Err(BoundsError::Ellipticity(m));
    }
    check_order(p)?;
    check_nonneg("L1", l1)?;
    check_nonneg("L2", l2)?;
    let c1 = (l1 + l2) * (2.0 * p - 1.0) + l1 * l1 * (p - 1.0) * (p - 1.0) / (2.0 * m);
    let c2 = l1 + l2 + l1 * l1 * (p - 1.0) / (2.0 * m);
    Ok(Theorem1Constants { c1, c2, l1, l2, m, p })
}

/// W₀^p e^{C₁t} + (C₂/C₁)(e^{C₁t} − 1)|Δa|^p, or W₀^p + C₂t|Δa|^p when C₁ = 0.
pub fn theorem1_envelope(w0p: f64, consts: &Theorem1Constants, delta_a: f64, t: f64) -> f64 {
    let drive = pow(delta_a, consts.p);
    if consts.c1 == 0.0 {
        w0p + consts.c2 * t * drive
    } else {
        let growth = (consts.c1 * t).exp_m1();
        w0p * (1.0 + growth) + consts.c2 / consts.c1 * growth * drive
    }
}

/// W₂²(ρ₀) + L₁²|Δa|²t/(2m): the affine-in-time envelope for b = 0 and
/// x-independent A at p = 2.
pub fn example_p2_envelope(w0_sq: f64, l1: f64, m: f64, delta_a: f64, t: f64) -> Result<f64, BoundsError> {
    if !(m.is_finite() && m > 0.0) {
        return Err(BoundsError::Ellipticity(m));
    }
    Ok(w0_sq + l1 * l1 * delta_a * delta_a * t / (2.0 * m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LangevinConstants {
    pub lambda: f64,
    pub k1: f64,
    pub k2: f64,
    pub k: f64,
    pub l3: f64,
    pub d: usize,
    pub p: f64,
    pub warnings: Vec<String>,
}

impl LangevinConstants {
    /// True when the (p − 2) factor annihilates the noise-mismatch term.
    pub fn noise_term_vanishes(&self) -> bool {
        self.k2 == 0.0
    }
}

pub const P2_NOISE_WARNING: &str = "K2 = 0 at p = 2: the (p-2) factor removes the temperature-mismatch term, \
so the envelope does not control |sqrt(2/beta) - sqrt(2/beta')|; use the langevin_p2_corrected envelope";

/// (λ, K₁, K₂) with λ = pk/2, K₁ = (4(p−1))^{p−1}L₃^p/(pk)^{p−1} and
/// K₂ = (p−1)d(2d(p−1)(p−2)/k)^{p/2}.
pub fn langevin_constants(k: f64, l3: f64, d: usize, p: f64) -> Result<LangevinConstants, BoundsError> {
    if !(k.is_finite() && k > 0.0) {
        return Err(BoundsError::Convexity(k));
    }
    check_order(p)?;
    check_nonneg("L3", l3)?;
    if d == 0 {
        return Err(BoundsError::Invalid("dimension must be at least 1".into()));
    }
    let df = d as f64;
    let lambda = p * k / 2.0;
    let k1 = pow(4.0 * (p - 1.0), p - 1.0) * pow(l3, p) / pow(p * k, p - 1.0);
    let k2 = (p - 1.0) * df * pow(2.0 * df * (p - 1.0) * (p - 2.0) / k, p / 2.0);
    let mut warnings = Vec::new();
    if p == 2.0 {
        warnings.push(P2_NOISE_WARNING.to_string());
    }
    Ok(LangevinConstants { lambda, k1, k2, k, l3, d, p, warnings })
}

/// W₀^p e^{−λt} + (K₁|Δa|^p + K₂|Δσ|^p)(1 − e^{−λt})/λ.
pub fn langevin_envelope(w0p: f64, consts: &LangevinConstants, delta_a: f64, delta_sigma_beta: f64, t: f64) -> f64 {
    let forcing = consts.k1 * pow(delta_a, consts.p) + consts.k2 * pow(delta_sigma_beta.abs(), consts.p);
    let decay = -(-consts.lambda * t).exp_m1();
    w0p * (-consts.lambda * t).exp() + forcing / consts.lambda * decay
}

/// p = 2 Langevin envelope that keeps the Itô noise term:
/// W₀²e^{−kt} + (K₁|Δa|² + d|Δσ|²)(1 − e^{−kt})/k, K₁ = 2L₃²/k.
pub fn langevin_p2_corrected_envelope(
    w0_sq: f64,
    k: f64,
    l3: f64,
    d: usize,
    delta_a: f64,
    delta_sigma_beta: f64,
    t: f64,
) -> Result<f64, BoundsError> {
    if !(k.is_finite() && k > 0.0) {
        return Err(BoundsError::Convexity(k));
    }
    let k1 = 2.0 * l3 * l3 / k;
    let forcing = k1 * delta_a * delta_a + d as f64 * delta_sigma_beta * delta_sigma_beta;
    Ok(w0_sq * (-k * t).exp() - forcing / k * (-k * t).exp_m1())
}

/// |√(2/β) − √(2/β′)|.
pub fn noise_mismatch(beta: f64, beta_prime: f64) -> f64 {
    ((2.0 / beta).sqrt() - (2.0 / beta_prime).sqrt()).abs()
}

/// Which envelope a [`BoundEnvelope`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    Theorem1,
    ExampleP2,
    Langevin,
    LangevinP2Corrected,
}

impl EnvelopeKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvelopeKind::Theorem1 => "theorem1",
            EnvelopeKind::ExampleP2 => "example_p2",
            EnvelopeKind::Langevin => "langevin",
            EnvelopeKind::LangevinP2Corrected => "langevin_p2_corrected",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Theorem1, Self::ExampleP2, Self::Langevin, Self::LangevinP2Corrected]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvelopeParams {
    Theorem1(Theorem1Constants),
    ExampleP2 { l1: f64, m: f64 },
    Langevin(LangevinConstants),
    LangevinP2Corrected { k: f64, l3: f64, d: usize },
}

/// A time-parameterized upper bound on W_p^p.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEnvelope {
    pub params: EnvelopeParams,
    pub order: f64,
    pub w0p: f64,
    pub delta_a: f64,
    pub delta_sigma_beta: f64,
    /// Set when the envelope provably misses a mechanism present in the run.
    pub vacuous: Option<String>,
}

impl BoundEnvelope {
    pub fn theorem1(consts: Theorem1Constants, w0p: f64, delta_a: f64) -> Self {
        Self {
            order: consts.p,
            params: EnvelopeParams::Theorem1(consts),
            w0p,
            delta_a,
            delta_sigma_beta: 0.0,
            vacuous: None,
        }
    }

    pub fn example_p2(l1: f64, m: f64, w0_sq: f64, delta_a: f64) -> Result<Self, BoundsError> {
        if !(m.is_finite() && m > 0.0) {
            return Err(BoundsError::Ellipticity(m));
        }
        Ok(Self {
            params: EnvelopeParams::ExampleP2 { l1, m },
            order: 2.0,
            w0p: w0_sq,
            delta_a,
            delta_sigma_beta: 0.0,
            vacuous: None,
        })
    }

    pub fn langevin(consts: LangevinConstants, w0p: f64, delta_a: f64, delta_sigma_beta: f64) -> Self {
        let vacuous = (consts.noise_term_vanishes() && delta_sigma_beta != 0.0).then(|| {
            "K2 = 0 while the temperatures differ: the envelope ignores the noise mismatch".to_string()
        });
        Self { order: consts.p, params: EnvelopeParams::Langevin(consts), w0p, delta_a, delta_sigma_beta, vacuous }
    }

    pub fn langevin_p2_corrected(
        k: f64,
        l3: f64,
        d: usize,
        w0_sq: f64,
        delta_a: f64,
        delta_sigma_beta: f64,
    ) -> Result<Self, BoundsError> {
        if !(k.is_finite() && k > 0.0) {
            return Err(BoundsError::Convexity(k));
        }
        Ok(Self {
            params: EnvelopeParams::LangevinP2Corrected { k, l3, d },
            order: 2.0,
            w0p: w0_sq,
            delta_a,
            delta_sigma_beta,
            vacuous: None,
        })
    }

    pub fn kind(&self) -> EnvelopeKind {
        match self.params {
            EnvelopeParams::Theorem1(_) => EnvelopeKind::Theorem1,
            EnvelopeParams::ExampleP2 { .. } => EnvelopeKind::ExampleP2,
            EnvelopeParams::Langevin(_) => EnvelopeKind::Langevin,
            EnvelopeParams::LangevinP2Corrected { .. } => EnvelopeKind::LangevinP2Corrected,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match &self.params {
            EnvelopeParams::Theorem1(c) => theorem1_envelope(self.w0p, c, self.delta_a, t),
            EnvelopeParams::ExampleP2 { l1, m } => self.w0p + l1 * l1 * self.delta_a * self.delta_a * t / (2.0 * m),
            EnvelopeParams::Langevin(c) => langevin_envelope(self.w0p, c, self.delta_a, self.delta_sigma_beta, t),
            EnvelopeParams::LangevinP2Corrected { k, l3, d } => {
                let k1 = 2.0 * l3 * l3 / k;
                let forcing = k1 * self.delta_a * self.delta_a + *d as f64 * self.delta_sigma_beta * self.delta_sigma_beta;
                self.w0p * (-k * t).exp() - forcing / k * (-k * t).exp_m1()
            }
        }
    }

    /// Large-time value for the contracting envelopes.
    pub fn stationary(&self) -> Option<f64> {
        match &self.params {
            EnvelopeParams::Langevin(c) => Some(
                (c.k1 * pow(self.delta_a, c.p) + c.k2 * pow(self.delta_sigma_beta.abs(), c.p)) / c.lambda,
            ),
            EnvelopeParams::LangevinP2Corrected { k, l3, d } => Some(
                (2.0 * l3 * l3 / k * self.delta_a * self.delta_a
                    + *d as f64 * self.delta_sigma_beta * self.delta_sigma_beta)
                    / k,
            ),
            _ => None,
        }
    }
}

/// Decimal rendering with 12 significant digits, trailing zeros trimmed
/// (the `%.12g` convention).
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn theorem1_plug_in() {
        let c = theorem1_constants(1.0, 0.0, 1.0, 2.0).unwrap();
        assert_eq!((c.c1, c.c2), (3.5, 1.5));
        let c = theorem1_constants(2.0, 1.0, 0.5, 3.0).unwrap();
        assert_eq!((c.c1, c.c2), (31.0, 11.0));
        let c = theorem1_constants(0.0, 0.0, 1.0, 4.0).unwrap();
        assert_eq!((c.c1, c.c2), (0.0, 0.0));
    }

    #[test]
    fn theorem1_input_errors() {
        assert_eq!(theorem1_constants(1.0, 0.0, 0.0, 2.0), Err(BoundsError::Ellipticity(0.0)));
        assert_eq!(theorem1_constants(1.0, 0.0, 1.0, 1.5), Err(BoundsError::OrderOutOfRange(1.5)));
        assert_eq!(theorem1_constants(1.0, 0.0, 1.0, 33.0), Err(BoundsError::OrderOutOfRange(33.0)));
    }

    #[test]
    fn theorem1_envelope_values() {
        let zero = theorem1_constants(1.0, 0.0, 1.0, 2.0).unwrap();
        assert_eq!(theorem1_envelope(0.0, &zero, 0.0, 3.0), 0.0);
        let pure = Theorem1Constants { c1: 1.0, c2: 0.0, l1: 0.0, l2: 0.0, m: 1.0, p: 2.0 };
        assert_relative_eq!(theorem1_envelope(1.0, &pure, 0.0, 1.0), std::f64::consts::E, max_relative = 1e-15);
        // (1.5/3.5)(e^{3.5} − 1) = 13.7638…, i.e. 13.76 to four figures.
        let v = theorem1_envelope(0.0, &zero, 1.0, 1.0);
        assert_relative_eq!(v, 1.5 / 3.5 * (3.5f64.exp() - 1.0), max_relative = 1e-14);
        assert!((v - 13.76).abs() < 5e-3);
    }

    #[test]
    fn theorem1_degenerate_limit_is_continuous() {
        let exact = Theorem1Constants { c1: 0.0, c2: 2.0, l1: 0.0, l2: 0.0, m: 1.0, p: 2.0 };
        let near = Theorem1Constants { c1: 1e-8, ..exact };
        for t in [0.1, 1.0, 5.0] {
            let a = theorem1_envelope(0.7, &exact, 1.3, t);
            let b = theorem1_envelope(0.7, &near, 1.3, t);
            assert_relative_eq!(a, b, max_relative = 1e-6);
        }
    }

    #[test]
    fn example_p2_values() {
        assert_eq!(example_p2_envelope(0.3, 1.0, 0.5, 0.0, 10.0).unwrap(), 0.3);
        assert_relative_eq!(example_p2_envelope(0.0, 1.0, 0.5, 1.5, 1.0).unwrap(), 2.25, max_relative = 1e-15);
        assert_eq!(example_p2_envelope(4.0, 0.0, 0.5, 1.0, 7.0).unwrap(), 4.0);
        assert!(example_p2_envelope(0.0, 1.0, -1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn langevin_plug_in() {
        let c = langevin_constants(1.0, 1.0, 1, 4.0).unwrap();
        assert_eq!((c.lambda, c.k1, c.k2), (2.0, 27.0, 432.0));
        assert!(c.warnings.is_empty());
        let c = langevin_constants(1.0, 1.0, 3, 2.0).unwrap();
        assert_eq!((c.lambda, c.k1, c.k2), (1.0, 2.0, 0.0));
        assert_eq!(c.warnings.len(), 1);
        let c = langevin_constants(1.0, 0.0, 1, 4.0).unwrap();
        assert_eq!(c.k1, 0.0);
        assert_eq!(langevin_constants(0.0, 1.0, 1, 2.0), Err(BoundsError::Convexity(0.0)));
    }

    #[test]
    fn langevin_envelope_limits() {
        let c = langevin_constants(1.0, 1.0, 1, 4.0).unwrap();
        assert_relative_eq!(langevin_envelope(2.0, &c, 0.0, 0.0, 0.7), 2.0 * (-1.4f64).exp(), max_relative = 1e-15);
        let zero_k2 = LangevinConstants { k2: 0.0, ..c.clone() };
        assert_relative_eq!(langevin_envelope(0.0, &zero_k2, 1.0, 0.3, 60.0), 13.5, max_relative = 1e-12);
        // Quadratic potential, k = L3 = 1, p = 2: envelope 2(1 − e^{−t}) ≥ (1 − e^{−t})².
        let q = langevin_constants(1.0, 1.0, 1, 2.0).unwrap();
        for i in 0..=50 {
            let t = i as f64 * 0.1;
            let env = langevin_envelope(0.0, &q, 1.0, 0.0, t);
            assert_relative_eq!(env, 2.0 * (1.0 - (-t).exp()), max_relative = 1e-12, epsilon = 1e-15);
            assert!(env >= (1.0 - (-t).exp()).powi(2));
        }
    }

    #[test]
    fn envelope_objects_agree_with_free_functions() {
        let c = theorem1_constants(1.0, 0.5, 0.5, 3.0).unwrap();
        let e = BoundEnvelope::theorem1(c, 0.2, 0.8);
        assert_eq!(e.eval(0.4), theorem1_envelope(0.2, &c, 0.8, 0.4));
        let l = langevin_constants(1.0, 1.0, 1, 2.0).unwrap();
        let e = BoundEnvelope::langevin(l, 0.0, 0.0, 0.5);
        assert!(e.vacuous.is_some());
        let e = BoundEnvelope::langevin_p2_corrected(1.0, 1.0, 1, 0.0, 0.0, 0.5).unwrap();
        assert_eq!(e.eval(2.0), langevin_p2_corrected_envelope(0.0, 1.0, 1.0, 1, 0.0, 0.5, 2.0).unwrap());
        assert_relative_eq!(e.stationary().unwrap(), 0.25, max_relative = 1e-15);
        assert_eq!(EnvelopeKind::parse("langevin_p2_corrected"), Some(EnvelopeKind::LangevinP2Corrected));
    }

    #[test]
    fn sig12_formatting() {
        assert_eq!(format_sig12(3.5), "3.5");
        assert_eq!(format_sig12(432.0), "432");
        assert_eq!(format_sig12(0.0), "0");
        assert_eq!(format_sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_sig12(std::f64::consts::E), "2.71828182846");
        assert_eq!(format_sig12(1.5e20), "1.5e20");
        assert_eq!(format_sig12(-2.5e-7), "-2.5e-7");
    }
}
