//! Anscombe residuals and outlier flags.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{Family, FamilyKind};
use crate::quadrature::integrate_adaptive;

pub const DEFAULT_CUTOFF: f64 = 2.6;
const ANSCOMBE_EXPONENT: f64 = 2.0 / 3.0;
const MEAN_FLOOR: f64 = 1e-8;
const QUAD_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residuals: Vec<f64>,
    /// `|r_i| >= cutoff`.
    pub flags: Vec<bool>,
    pub cutoff: f64,
}

impl ResidualReport {
    pub fn flagged_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

// ∫_0^x t^(a-1) (1-t)^(b-1) dt for x <= 1/2; t = s^(1/a) removes the endpoint singularity
fn lower_part(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let upper = x.powf(a);
    integrate_adaptive(|s| (1.0 - s.powf(1.0 / a)).powf(b - 1.0), 0.0, upper, QUAD_TOL) / a
}

/// Unnormalized incomplete beta `∫_0^x t^(a-1) (1-t)^(b-1) dt`.
pub fn incomplete_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("incomplete beta argument {x} outside [0, 1]")));
    }
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("incomplete beta shapes must be positive, got ({a}, {b})")));
    }
    if x <= 0.5 {
        return Ok(lower_part(x, a, b));
    }
    // reflect the part above 1/2: t -> 1 - t swaps the shapes
    Ok(lower_part(0.5, a, b) + lower_part(0.5, b, a) - lower_part(1.0 - x, b, a))
}

fn ib(x: f64) -> f64 {
    incomplete_beta(x, ANSCOMBE_EXPONENT, ANSCOMBE_EXPONENT).expect("argument clamped to [0, 1]")
}

fn residual(fam: &Family, y: f64, mu: f64) -> f64 {
    match fam.kind() {
        FamilyKind::Gaussian => (y - mu) / fam.dispersion().sqrt(),
        FamilyKind::Bernoulli => {
            let mu = mu.clamp(MEAN_FLOOR, 1.0 - MEAN_FLOOR);
            (ib(y.clamp(0.0, 1.0)) - ib(mu)) / (mu * (1.0 - mu)).powf(1.0 / 6.0)
        }
        FamilyKind::Poisson => {
            let mu = mu.max(MEAN_FLOOR);
            1.5 * (y.max(0.0).powf(ANSCOMBE_EXPONENT) - mu.powf(ANSCOMBE_EXPONENT)) / mu.powf(1.0 / 6.0)
        }
        FamilyKind::Exponential => {
            let mu = mu.max(MEAN_FLOOR);
            3.0 * (y.max(0.0).cbrt() - mu.cbrt()) / mu.cbrt()
        }
    }
}

/// Anscombe residuals of `y` against fitted means, flagged at `cutoff`.
pub fn anscombe_residuals(fam: &Family, y: &[f64], mu_hat: &[f64], cutoff: f64) -> Result<ResidualReport> {
    if y.len() != mu_hat.len() {
        return Err(Error::Dimension(format!("{} responses but {} fitted means", y.len(), mu_hat.len())));
    }
    if cutoff.is_nan() || cutoff < 0.0 {
        return Err(Error::Domain(format!("cutoff must be non-negative, got {cutoff}")));
    }
    let residuals: Vec<f64> = y.iter().zip(mu_hat).map(|(&yi, &mi)| residual(fam, yi, mi)).collect();
    let flags = residuals.iter().map(|r| r.abs() >= cutoff).collect();
    Ok(ResidualReport { residuals, flags, cutoff })
}
