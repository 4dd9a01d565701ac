//! Regularized incomplete beta function and the mean/deviation
//! parameterization of the beta distribution.
//!
//! The drop curves of the beta-family AQMs are CDFs of a beta distribution
//! described by its mean `mu` and standard deviation `sigma` rather than by
//! its shape parameters. This module owns both directions of that mapping and
//! the numeric kernel that evaluates `I_z(alpha, beta)`.
//!
//! Inputs are checked strictly. Callers that want clamping (for example a
//! normalized queue length slightly outside `[0, 1]`) must clamp before
//! calling in.

use thiserror::Error;

/// Relative convergence tolerance of the continued fraction.
const CF_TOLERANCE: f64 = 1e-12;
/// Iteration cap of the continued fraction.
const CF_MAX_ITER: usize = 500;
/// Guard against division by zero in the Lentz recurrence.
const TINY: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecialError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("continued fraction did not converge within {CF_MAX_ITER} iterations (a={a}, b={b}, z={z})")]
    NoConvergence { a: f64, b: f64, z: f64 },
}

/// Shape parameters of a beta distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaShape {
    alpha: f64,
    beta: f64,
}

impl BetaShape {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, SpecialError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(SpecialError::Domain(format!("alpha must be positive, got {alpha}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(SpecialError::Domain(format!("beta must be positive, got {beta}")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Mean `alpha / (alpha + beta)`.
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// Variance `alpha beta / ((alpha + beta)^2 (alpha + beta + 1))`.
    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }
}

/// Mean and standard deviation of a beta distribution.
///
/// Valid moments satisfy `0 < mu < 1` and `0 < sigma < sqrt(mu (1 - mu))`.
/// The upper bound is strict; equality is rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaMoments {
    mu: f64,
    sigma: f64,
}

impl BetaMoments {
    pub fn new(mu: f64, sigma: f64) -> Result<Self, SpecialError> {
        if !(mu > 0.0 && mu < 1.0) {
            return Err(SpecialError::Domain(format!("mu must lie in (0, 1), got {mu}")));
        }
        if !(sigma > 0.0) {
            return Err(SpecialError::Domain(format!("sigma must be positive, got {sigma}")));
        }
        if sigma * sigma >= mu * (1.0 - mu) {
            return Err(SpecialError::Domain(format!(
                "sigma^2 = {} must be below mu(1-mu) = {}",
                sigma * sigma,
                mu * (1.0 - mu)
            )));
        }
        Ok(Self { mu, sigma })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// `I_z(alpha, beta)`, the CDF of the beta distribution at `z`.
pub fn regularized_incomplete_beta(z: f64, shape: BetaShape) -> Result<f64, SpecialError> {
    if !(0.0..=1.0).contains(&z) {
        return Err(SpecialError::Domain(format!("z must lie in [0, 1], got {z}")));
    }
    let (a, b) = (shape.alpha, shape.beta);
    if z == 0.0 {
        return Ok(0.0);
    }
    if z == 1.0 {
        return Ok(1.0);
    }

    // The continued fraction converges fast below the mean-ish split point;
    // above it, evaluate the complement with swapped shapes.
    if z > (a + 1.0) / (a + b + 2.0) {
        let tail = prefix_and_fraction(1.0 - z, b, a)?;
        Ok((1.0 - tail).clamp(0.0, 1.0))
    } else {
        Ok(prefix_and_fraction(z, a, b)?.clamp(0.0, 1.0))
    }
}

/// `z^a (1-z)^b / (a B(a,b))` times the continued fraction.
fn prefix_and_fraction(z: f64, a: f64, b: f64) -> Result<f64, SpecialError> {
    let log_front = a * z.ln() + b * (1.0 - z).ln() - ln_beta(a, b) - a.ln();
    let cf = continued_fraction(z, a, b)?;
    Ok(log_front.exp() * cf)
}

/// Modified Lentz evaluation of the incomplete beta continued fraction.
fn continued_fraction(z: f64, a: f64, b: f64) -> Result<f64, SpecialError> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;

    let mut c = 1.0;
    let mut d = 1.0 - qab * z / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;

    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        // even step
        let aa = m * (b - m) * z / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        // odd step
        let aa = -(a + m) * (qab + m) * z / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;

        if (delta - 1.0).abs() < CF_TOLERANCE {
            return Ok(h);
        }
    }
    Err(SpecialError::NoConvergence { a, b, z })
}

/// Lanczos coefficients (g = 607/128, 15 terms).
const LANCZOS_G: f64 = 607.0 / 128.0;
const LANCZOS_COEFFS: [f64; 15] = [
    0.999_999_999_999_997_1,
    57.156_235_665_862_92,
    -59.597_960_355_475_49,
    14.136_097_974_741_746,
    -0.491_913_816_097_620_2,
    3.399_464_998_481_189e-5,
    4.652_362_892_704_858e-5,
    -9.837_447_530_487_956e-5,
    1.580_887_032_249_125e-4,
    -2.102_644_417_241_049e-4,
    2.174_396_181_152_126_6e-4,
    -1.643_181_065_367_639e-4,
    8.441_822_398_385_275e-5,
    -2.619_083_840_158_141e-5,
    3.689_918_265_953_162_4e-6,
];

/// Natural log of the gamma function for positive arguments.
pub(crate) fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

pub(crate) fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Shape parameters whose mean and standard deviation are the given moments.
pub fn moments_to_shape(m: BetaMoments) -> Result<BetaShape, SpecialError> {
    let (mu, sigma) = (m.mu, m.sigma);
    let common = mu * (1.0 - mu) / (sigma * sigma) - 1.0;
    BetaShape::new(mu * common, (1.0 - mu) * common)
}

/// Standard deviation as a fraction `theta` of its upper bound `sqrt(mu (1 - mu))`.
pub fn sigma_from_theta(theta: f64, mu: f64) -> Result<f64, SpecialError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(SpecialError::Domain(format!("theta must lie in (0, 1), got {theta}")));
    }
    if !(mu > 0.0 && mu < 1.0) {
        return Err(SpecialError::Domain(format!("mu must lie in (0, 1), got {mu}")));
    }
    Ok(theta * (mu * (1.0 - mu)).sqrt())
}

/// Beta CDF addressed by mean and standard deviation.
pub fn beta_cdf_by_moments(z: f64, m: BetaMoments) -> Result<f64, SpecialError> {
    regularized_incomplete_beta(z, moments_to_shape(m)?)
}
