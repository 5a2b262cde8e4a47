//! Exponential-family response distributions with canonical links.
//!
//! Each family exposes its cumulant function `b` and derivatives, its density,
//! and the three power-weighted moments `i0 = ∫ f^{1+α}`, `i1 = ∫ f^{1+α} u`,
//! `i2 = ∫ f^{1+α} u²` (sums for discrete responses) needed by the divergence
//! loss. Here `u = ∂ log f / ∂θ = (y - b'(θ)) / φ` is the score; `φ = 1` except
//! for the Gaussian family, which is parameterized directly by its mean.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};

/// Largest canonical parameter accepted for Poisson responses (mean ~ 4.9e8).
pub const POISSON_THETA_MAX: f64 = 20.0;
/// Smallest canonical parameter accepted for Poisson responses.
pub const POISSON_THETA_MIN: f64 = -50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Gaussian,
    Bernoulli,
    Poisson,
    Exponential,
}

impl std::fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FamilyKind::Gaussian => "gaussian",
            FamilyKind::Bernoulli => "bernoulli",
            FamilyKind::Poisson => "poisson",
            FamilyKind::Exponential => "exponential",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(FamilyKind::Gaussian),
            "bernoulli" | "binomial" | "logistic" => Ok(FamilyKind::Bernoulli),
            "poisson" => Ok(FamilyKind::Poisson),
            "exponential" => Ok(FamilyKind::Exponential),
            other => Err(Error::Domain(format!("unknown family '{other}'"))),
        }
    }
}

/// A response distribution: kind plus dispersion (only free for Gaussian).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Family {
    kind: FamilyKind,
    dispersion: f64,
}

/// Power-weighted moments of the model density at `(θ, α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpdTerms {
    pub i0: f64,
    pub i1: f64,
    pub i2: f64,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Family {
    pub fn gaussian(dispersion: f64) -> Result<Self> {
        if !(dispersion > 0.0 && dispersion.is_finite()) {
            return Err(Error::Domain(format!("Gaussian dispersion must be positive, got {dispersion}")));
        }
        Ok(Self { kind: FamilyKind::Gaussian, dispersion })
    }

    pub fn bernoulli() -> Self {
        Self { kind: FamilyKind::Bernoulli, dispersion: 1.0 }
    }

    pub fn poisson() -> Self {
        Self { kind: FamilyKind::Poisson, dispersion: 1.0 }
    }

    pub fn exponential() -> Self {
        Self { kind: FamilyKind::Exponential, dispersion: 1.0 }
    }

    /// Family of the given kind; `dispersion` is ignored unless Gaussian.
    pub fn from_kind(kind: FamilyKind, dispersion: f64) -> Result<Self> {
        match kind {
            FamilyKind::Gaussian => Self::gaussian(dispersion),
            FamilyKind::Bernoulli => Ok(Self::bernoulli()),
            FamilyKind::Poisson => Ok(Self::poisson()),
            FamilyKind::Exponential => Ok(Self::exponential()),
        }
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn dispersion(&self) -> f64 {
        self.dispersion
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, FamilyKind::Bernoulli | FamilyKind::Poisson)
    }

    /// Whether `θ` lies in the domain where this family is evaluated.
    pub fn admissible(&self, theta: f64) -> bool {
        theta.is_finite()
            && match self.kind {
                FamilyKind::Gaussian | FamilyKind::Bernoulli => true,
                FamilyKind::Poisson => (POISSON_THETA_MIN..=POISSON_THETA_MAX).contains(&theta),
                FamilyKind::Exponential => theta < 0.0,
            }
    }

    fn check_theta(&self, theta: f64) -> Result<()> {
        if self.admissible(theta) {
            Ok(())
        } else {
            Err(Error::Domain(format!("canonical parameter {theta} not admissible for {}", self.kind)))
        }
    }

    /// Whether `y` lies in the support of the response.
    pub fn in_support(&self, y: f64) -> bool {
        y.is_finite()
            && match self.kind {
                FamilyKind::Gaussian => true,
                FamilyKind::Bernoulli => y == 0.0 || y == 1.0,
                FamilyKind::Poisson => y >= 0.0 && y.fract() == 0.0,
                FamilyKind::Exponential => y >= 0.0,
            }
    }

    pub fn check_response(&self, y: f64) -> Result<()> {
        if self.in_support(y) {
            Ok(())
        } else {
            Err(Error::Domain(format!("response {y} outside the {} support", self.kind)))
        }
    }

    /// `(b(θ), b'(θ), b''(θ))`.
    pub fn b_derivatives(&self, theta: f64) -> Result<(f64, f64, f64)> {
        self.check_theta(theta)?;
        Ok(match self.kind {
            FamilyKind::Gaussian => (0.5 * theta * theta, theta, 1.0),
            FamilyKind::Bernoulli => {
                let p = logistic(theta);
                (softplus(theta), p, p * logistic(-theta))
            }
            FamilyKind::Poisson => {
                let e = theta.exp();
                (e, e, e)
            }
            FamilyKind::Exponential => (-(-theta).ln(), -1.0 / theta, 1.0 / (theta * theta)),
        })
    }

    /// Mean `b'(θ)`.
    pub fn mean(&self, theta: f64) -> f64 {
        match self.kind {
            FamilyKind::Gaussian => theta,
            FamilyKind::Bernoulli => logistic(theta),
            FamilyKind::Poisson => theta.exp(),
            FamilyKind::Exponential => -1.0 / theta,
        }
    }

    /// Canonical link `G(μ)`, the inverse of [`Family::mean`].
    pub fn link(&self, mu: f64) -> f64 {
        match self.kind {
            FamilyKind::Gaussian => mu,
            FamilyKind::Bernoulli => (mu / (1.0 - mu)).ln(),
            FamilyKind::Poisson => mu.ln(),
            FamilyKind::Exponential => -1.0 / mu,
        }
    }

    /// Score `∂ log f_θ(y) / ∂θ`.
    pub fn score(&self, y: f64, theta: f64) -> f64 {
        (y - self.mean(theta)) / self.dispersion
    }

    /// `-∂² log f_θ(y) / ∂θ² = b''(θ) / φ`.
    pub fn curvature(&self, theta: f64) -> f64 {
        let b2 = match self.kind {
            FamilyKind::Gaussian => 1.0,
            FamilyKind::Bernoulli => logistic(theta) * logistic(-theta),
            FamilyKind::Poisson => theta.exp(),
            FamilyKind::Exponential => 1.0 / (theta * theta),
        };
        b2 / self.dispersion
    }

    /// `log f_θ(y)` without support or domain checks.
    pub(crate) fn log_density_unchecked(&self, y: f64, theta: f64) -> f64 {
        match self.kind {
            FamilyKind::Gaussian => {
                let r = y - theta;
                -0.5 * (2.0 * PI * self.dispersion).ln() - 0.5 * r * r / self.dispersion
            }
            FamilyKind::Bernoulli => y * theta - softplus(theta),
            FamilyKind::Poisson => y * theta - theta.exp() - ln_factorial(y as u64),
            FamilyKind::Exponential => y * theta + (-theta).ln(),
        }
    }

    pub fn log_density(&self, y: f64, theta: f64) -> Result<f64> {
        self.check_response(y)?;
        self.check_theta(theta)?;
        Ok(self.log_density_unchecked(y, theta))
    }

    pub fn density(&self, y: f64, theta: f64) -> Result<f64> {
        self.log_density(y, theta).map(f64::exp)
    }

    /// Power-weighted moments `i0, i1, i2` at robustness parameter `α > 0`.
    pub fn dpd_terms(&self, theta: f64, alpha: f64) -> Result<DpdTerms> {
        if !(alpha > 0.0) {
            return Err(Error::Domain(format!("dpd_terms requires alpha > 0, got {alpha}")));
        }
        self.check_theta(theta)?;
        Ok(self.dpd_terms_unchecked(theta, alpha))
    }

    pub(crate) fn dpd_terms_unchecked(&self, theta: f64, alpha: f64) -> DpdTerms {
        let a1 = 1.0 + alpha;
        match self.kind {
            FamilyKind::Gaussian => {
                let phi = self.dispersion;
                let i0 = (2.0 * PI * phi).powf(-0.5 * alpha) / a1.sqrt();
                DpdTerms { i0, i1: 0.0, i2: i0 / (phi * a1) }
            }
            FamilyKind::Bernoulli => {
                let p = logistic(theta);
                let q = logistic(-theta);
                let fp = p.powf(a1);
                let fq = q.powf(a1);
                DpdTerms { i0: fq + fp, i1: -fq * p + fp * q, i2: fq * p * p + fp * q * q }
            }
            FamilyKind::Poisson => poisson_terms(theta, alpha),
            FamilyKind::Exponential => {
                let rate = -theta;
                DpdTerms {
                    i0: rate.powf(alpha) / a1,
                    i1: -alpha * rate.powf(alpha - 1.0) / (a1 * a1),
                    i2: rate.powf(alpha - 2.0) * (1.0 + alpha * alpha) / (a1 * a1 * a1),
                }
            }
        }
    }
}

/// Truncation window `[lo, hi]` for Poisson moment sums at mean `mu`.
///
/// The upper end is `ceil(mu + 12 sqrt(mu) + 30)`; the symmetric lower cut only
/// drops terms that are below double precision relative to the mode.
pub fn poisson_window(mu: f64) -> (u64, u64) {
    let spread = 12.0 * mu.sqrt() + 30.0;
    let hi = (mu + spread).ceil() as u64;
    let lo = (mu - spread).floor().max(0.0) as u64;
    (lo, hi)
}

fn poisson_terms(theta: f64, alpha: f64) -> DpdTerms {
    let mu = theta.exp();
    let a1 = 1.0 + alpha;
    let (lo, hi) = poisson_window(mu);
    let mut log_f = lo as f64 * theta - mu - ln_factorial(lo);
    let (mut i0, mut i1, mut i2) = (0.0, 0.0, 0.0);
    for y in lo..=hi {
        if y > lo {
            log_f += theta - (y as f64).ln();
        }
        let w = (a1 * log_f).exp();
        let u = y as f64 - mu;
        i0 += w;
        i1 += w * u;
        i2 += w * u * u;
    }
    DpdTerms { i0, i1, i2 }
}

/// Difference-based robust variance estimate for responses ordered by the covariate:
/// `(1.4826 * median |y_{i+1} - y_i| / sqrt(2))^2`.
pub fn robust_scale_gaussian(y: &[f64]) -> Result<f64> {
    if y.len() < 3 {
        return Err(Error::DegenerateData(format!("need at least 3 responses, got {}", y.len())));
    }
    let diffs: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let mad = median(&diffs);
    let sd = 1.4826 * mad / std::f64::consts::SQRT_2;
    let phi = sd * sd;
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(Error::DegenerateData("robust scale estimate is zero".into()));
    }
    Ok(phi)
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
