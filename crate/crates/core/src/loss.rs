//! Density power divergence loss per observation, the penalized objective and the
//! weights/working responses of the reweighted least-squares iteration.
//!
//! For `α > 0` the loss is `l(y, θ) = ∫ f_θ^{1+α} - (1 + 1/α) f_θ^α(y)`; at
//! `α = 0` it is the negative log-likelihood. The penalized objective is
//! `Σ l(y_i, θ_i) + λ cᵀ P c` with `θ = B c` (no `1/n` factor).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::Family;
use crate::spline::SplineBasis;

/// Value, first and second θ-derivative of the loss at one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub grad: f64,
    pub hess: f64,
}

/// Which curvature the reweighting uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// Observed second derivative of the loss (may be negative).
    Newton,
    /// Its expectation under the fitted model, `(1+α) i2`.
    Fisher,
}

/// Per-observation weights `w` and working responses `z` for one reweighting step.
#[derive(Debug, Clone, PartialEq)]
pub struct IrlsStepData {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub mode: WeightMode,
    /// Observations whose Newton weight was degenerate and were given the Fisher weight.
    pub fisher_fallback: Vec<bool>,
}

/// Newton weights smaller than this in magnitude are replaced by Fisher weights.
pub const DEGENERATE_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub(crate) struct PointEval {
    pub loss: LossEval,
    pub fisher: f64,
}

pub(crate) fn eval_point(fam: &Family, alpha: f64, y: f64, theta: f64) -> PointEval {
    let score = fam.score(y, theta);
    let kappa = fam.curvature(theta);
    if alpha == 0.0 {
        let loss = LossEval { value: -fam.log_density_unchecked(y, theta), grad: -score, hess: kappa };
        return PointEval { loss, fisher: kappa };
    }
    let terms = fam.dpd_terms_unchecked(theta, alpha);
    let a1 = 1.0 + alpha;
    let f_alpha = (alpha * fam.log_density_unchecked(y, theta)).exp();
    let value = terms.i0 - (1.0 + 1.0 / alpha) * f_alpha;
    let grad = a1 * (terms.i1 - f_alpha * score);
    let hess = a1 * (a1 * terms.i2 - kappa * terms.i0 + kappa * f_alpha - alpha * f_alpha * score * score);
    PointEval { loss: LossEval { value, grad, hess }, fisher: a1 * terms.i2 }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha >= 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must be >= 0, got {alpha}")))
    }
}

fn check_point(fam: &Family, y: f64, theta: f64) -> Result<()> {
    fam.check_response(y)?;
    if !fam.admissible(theta) {
        return Err(Error::Domain(format!("canonical parameter {theta} not admissible for {}", fam.kind())));
    }
    Ok(())
}

/// Loss value and θ-derivatives at a single observation.
pub fn loss(fam: &Family, alpha: f64, y: f64, theta: f64) -> Result<LossEval> {
    check_alpha(alpha)?;
    check_point(fam, y, theta)?;
    Ok(eval_point(fam, alpha, y, theta).loss)
}

fn check_lengths(basis: &SplineBasis, coefs: &[f64], y: &[f64]) -> Result<()> {
    if coefs.len() != basis.dim() || y.len() != basis.n() {
        return Err(Error::Dimension(format!(
            "basis is {}x{}, got {} responses and {} coefficients",
            basis.n(),
            basis.dim(),
            y.len(),
            coefs.len()
        )));
    }
    Ok(())
}

/// `Σ l(y_i, (B c)_i) + λ cᵀ P c`. Returns `+inf` when a fitted θ leaves the
/// family's admissible domain.
pub fn penalized_objective(
    coefs: &[f64],
    basis: &SplineBasis,
    fam: &Family,
    alpha: f64,
    lambda: f64,
    y: &[f64],
) -> Result<f64> {
    check_alpha(alpha)?;
    check_lengths(basis, coefs, y)?;
    for &yi in y {
        fam.check_response(yi)?;
    }
    let theta = basis.apply(coefs);
    Ok(objective_at(&theta, coefs, basis, fam, alpha, lambda, y))
}

pub(crate) fn objective_at(
    theta: &[f64],
    coefs: &[f64],
    basis: &SplineBasis,
    fam: &Family,
    alpha: f64,
    lambda: f64,
    y: &[f64],
) -> f64 {
    if theta.iter().any(|&t| !fam.admissible(t)) {
        return f64::INFINITY;
    }
    let data: f64 = y
        .iter()
        .zip(theta)
        .map(|(&yi, &ti)| eval_point(fam, alpha, yi, ti).loss.value)
        .sum();
    data + lambda * basis.penalty_form(coefs)
}

/// Gradient of [`penalized_objective`] with respect to the coefficients: `Bᵀ l' + 2λ P c`.
pub fn penalized_gradient(
    coefs: &[f64],
    basis: &SplineBasis,
    fam: &Family,
    alpha: f64,
    lambda: f64,
    y: &[f64],
) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    check_lengths(basis, coefs, y)?;
    let theta = basis.apply(coefs);
    let mut grads = Vec::with_capacity(y.len());
    for (&yi, &ti) in y.iter().zip(&theta) {
        check_point(fam, yi, ti)?;
        grads.push(eval_point(fam, alpha, yi, ti).loss.grad);
    }
    let c = nalgebra::DVector::from_column_slice(coefs);
    let g = basis.transpose_apply(&grads) + basis.penalty() * &c * (2.0 * lambda);
    Ok(g.iter().copied().collect())
}

/// Weights and working responses at the current fitted values `g`.
///
/// Both modes satisfy `w_i (z_i - g_i) = -l'(y_i, g_i)`.
pub fn irls_step_data(fam: &Family, alpha: f64, y: &[f64], g: &[f64], mode: WeightMode) -> Result<IrlsStepData> {
    check_alpha(alpha)?;
    if y.len() != g.len() {
        return Err(Error::Dimension(format!("{} responses but {} fitted values", y.len(), g.len())));
    }
    let mut w = Vec::with_capacity(y.len());
    let mut z = Vec::with_capacity(y.len());
    let mut fallback = Vec::with_capacity(y.len());
    for (&yi, &gi) in y.iter().zip(g) {
        check_point(fam, yi, gi)?;
        let pe = eval_point(fam, alpha, yi, gi);
        let (wi, fell_back) = match mode {
            WeightMode::Fisher => (pe.fisher, false),
            WeightMode::Newton if pe.loss.hess.abs() < DEGENERATE_WEIGHT => (pe.fisher, true),
            WeightMode::Newton => (pe.loss.hess, false),
        };
        w.push(wi);
        z.push(gi - pe.loss.grad / wi);
        fallback.push(fell_back);
    }
    Ok(IrlsStepData { w, z, mode, fisher_fallback: fallback })
}
