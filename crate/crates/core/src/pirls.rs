//! Penalized iteratively reweighted least squares for a fixed `(α, λ)`.
//!
//! Each iteration solves `(BᵀWB + 2λP) c⁺ = BᵀWz` with Newton weights (falling
//! back to Fisher weights per observation when the system is not positive
//! definite) and accepts the step only if the penalized objective does not
//! increase, halving it otherwise.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{Family, FamilyKind};
use crate::linalg::{self, SpdFactor};
use crate::loss::{self, eval_point, objective_at, WeightMode};
use crate::spline::SplineBasis;

/// Convergence controls for [`fit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Relative coefficient change below which iteration stops.
    pub tol_coef: f64,
    /// Relative objective change below which iteration stops (with a small gradient).
    pub tol_obj: f64,
    pub max_halvings: usize,
    /// Diagonal jitter added to systems that fail to factor.
    pub ridge: f64,
    pub mode: WeightMode,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iter: 100, tol_coef: 1e-8, tol_obj: 1e-10, max_halvings: 30, ridge: 1e-10, mode: WeightMode::Newton }
    }
}

/// Which weights the accepted iterations used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeUsed {
    Newton,
    Fisher,
    Mixed,
}

/// Outcome of a penalized fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coefs: Vec<f64>,
    pub alpha: f64,
    pub lambda: f64,
    pub theta_hat: Vec<f64>,
    pub mu_hat: Vec<f64>,
    pub objective: f64,
    pub edf: f64,
    pub iterations: usize,
    pub converged: bool,
    pub mode_used: ModeUsed,
    /// Relative gradient norm at the returned iterate.
    pub gradient_norm: f64,
    /// Whether ridge jitter was needed in a solve or in the edf trace.
    pub ridge_used: bool,
    /// Objective after every accepted iterate, starting with the initial value.
    pub trace: Vec<f64>,
}

/// Gradient tolerance for the `converged` flag.
pub const STATIONARITY_TOL: f64 = 1e-6;

struct Eval {
    grad: Vec<f64>,
    hess: Vec<f64>,
    fisher: Vec<f64>,
}

fn evaluate(fam: &Family, alpha: f64, y: &[f64], theta: &[f64]) -> Eval {
    let mut e = Eval { grad: Vec::with_capacity(y.len()), hess: Vec::with_capacity(y.len()), fisher: Vec::with_capacity(y.len()) };
    for (&yi, &ti) in y.iter().zip(theta) {
        let pe = eval_point(fam, alpha, yi, ti);
        e.grad.push(pe.loss.grad);
        e.hess.push(pe.loss.hess);
        e.fisher.push(pe.fisher);
    }
    e
}

/// `‖∇‖∞` relative to the magnitude of the terms it is assembled from.
fn relative_gradient(basis: &SplineBasis, coefs: &[f64], grad: &[f64], lambda: f64, objective: f64) -> f64 {
    let c = DVector::from_column_slice(coefs);
    let full = basis.transpose_apply(grad) + basis.penalty() * &c * (2.0 * lambda);
    let abs_grad: Vec<f64> = grad.iter().map(|g| g.abs()).collect();
    let data_scale = basis.transpose_apply(&abs_grad).amax();
    let pen_scale = 2.0 * lambda * (basis.penalty().abs() * c.abs()).amax();
    full.amax() / (1.0 + objective.abs() + data_scale + pen_scale)
}

fn check_inputs(y: &[f64], basis: &SplineBasis, fam: &Family, alpha: f64, lambda: f64, init: &[f64]) -> Result<()> {
    if y.len() != basis.n() || init.len() != basis.dim() {
        return Err(Error::Dimension(format!(
            "basis is {}x{}, got {} responses and {} coefficients",
            basis.n(),
            basis.dim(),
            y.len(),
            init.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be >= 0, got {lambda}")));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!("alpha must be >= 0, got {alpha}")));
    }
    if init.iter().any(|c| !c.is_finite()) {
        return Err(Error::BadInit("initial coefficients are not finite".into()));
    }
    for &yi in y {
        fam.check_response(yi)?;
    }
    Ok(())
}

/// Solves the weighted penalized system for the next coefficient proposal.
/// Returns the proposal, whether Fisher weights were substituted, and whether ridge was needed.
fn propose(
    basis: &SplineBasis,
    theta: &[f64],
    eval: &Eval,
    lambda: f64,
    use_newton: bool,
    ridge: f64,
) -> Result<(DVector<f64>, bool, bool)> {
    let split = basis.split();
    let system = |w: &[f64]| -> (DMatrix<f64>, DVector<f64>) {
        // B^T W z = B^T (W g - l'), solved in null-space/complement coordinates
        let rhs: Vec<f64> = w.iter().zip(theta).zip(&eval.grad).map(|((wi, ti), gi)| wi * ti - gi).collect();
        (split.penalized(&basis.weighted_cross(w), lambda), split.to_rotated(&basis.transpose_apply(&rhs)))
    };
    let mut weights: Vec<f64>;
    let mut substituted = false;
    if use_newton {
        weights = eval
            .hess
            .iter()
            .zip(&eval.fisher)
            .map(|(&h, &f)| {
                if h.abs() < loss::DEGENERATE_WEIGHT {
                    substituted = true;
                    f
                } else {
                    h
                }
            })
            .collect();
        let (a, b) = system(&weights);
        if let Some(f) = SpdFactor::new(&a) {
            return Ok((split.from_rotated(&f.solve(&b)), substituted, false));
        }
        // indefinite: Fisher weights for the observations with negative curvature
        for (w, f) in weights.iter_mut().zip(&eval.fisher) {
            if *w < 0.0 {
                *w = *f;
                substituted = true;
            }
        }
    } else {
        weights = eval.fisher.clone();
    }
    let (a, b) = system(&weights);
    if let Some(f) = SpdFactor::new(&a) {
        return Ok((split.from_rotated(&f.solve(&b)), substituted, false));
    }
    let jittered = linalg::with_ridge(&a, ridge);
    if let Some(f) = SpdFactor::new(&jittered) {
        return Ok((split.from_rotated(&f.solve(&b)), substituted, true));
    }
    let jittered = linalg::with_ridge(&a, ridge.max(1e-8) * 1e3);
    SpdFactor::new(&jittered)
        .map(|f| (split.from_rotated(&f.solve(&b)), substituted, true))
        .ok_or_else(|| Error::SingularSystem("penalized weighted system is singular after ridge".into()))
}

/// Minimizes the penalized objective at fixed `(α, λ)` starting from `init`.
pub fn fit(
    y: &[f64],
    basis: &SplineBasis,
    fam: &Family,
    alpha: f64,
    lambda: f64,
    init: &[f64],
    opts: &SolverOptions,
) -> Result<FitResult> {
    check_inputs(y, basis, fam, alpha, lambda, init)?;
    let mut coefs = init.to_vec();
    let mut theta = basis.apply(&coefs);
    let mut obj = objective_at(&theta, &coefs, basis, fam, alpha, lambda, y);
    if !obj.is_finite() {
        return Err(Error::BadInit(format!("objective at the initial value is {obj}")));
    }
    let mut trace = vec![obj];
    let mut eval = evaluate(fam, alpha, y, &theta);
    let mut used_newton = false;
    let mut used_fisher = false;
    let mut ridge_used = false;
    let mut iterations = 0;
    let mut rel_grad = relative_gradient(basis, &coefs, &eval.grad, lambda, obj);

    while iterations < opts.max_iter {
        if rel_grad < f64::EPSILON {
            break;
        }
        iterations += 1;
        let mut accepted = None;
        let attempts: &[bool] = if opts.mode == WeightMode::Newton { &[true, false] } else { &[false] };
        for &newton in attempts {
            let (proposal, substituted, ridged) = propose(basis, &theta, &eval, lambda, newton, opts.ridge)?;
            ridge_used |= ridged;
            let current = DVector::from_column_slice(&coefs);
            let direction = &proposal - &current;
            let mut step = 1.0;
            for _ in 0..=opts.max_halvings {
                let cand: Vec<f64> = (&current + &direction * step).iter().copied().collect();
                let cand_theta = basis.apply(&cand);
                let cand_obj = objective_at(&cand_theta, &cand, basis, fam, alpha, lambda, y);
                if cand_obj <= obj {
                    accepted = Some((cand, cand_theta, cand_obj));
                    break;
                }
                step *= 0.5;
            }
            if accepted.is_some() {
                if newton && !substituted {
                    used_newton = true;
                } else if newton {
                    used_newton = true;
                    used_fisher = true;
                } else {
                    used_fisher = true;
                }
                break;
            }
        }
        let Some((new_coefs, new_theta, new_obj)) = accepted else {
            break;
        };
        let diff: f64 = new_coefs.iter().zip(&coefs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = coefs.iter().map(|c| c * c).sum::<f64>().sqrt();
        let rel_coef = diff / (norm + 1e-12);
        let rel_obj = (obj - new_obj).abs() / (obj.abs() + 1e-12);
        coefs = new_coefs;
        theta = new_theta;
        obj = new_obj;
        trace.push(obj);
        eval = evaluate(fam, alpha, y, &theta);
        rel_grad = relative_gradient(basis, &coefs, &eval.grad, lambda, obj);
        if rel_coef < opts.tol_coef || (rel_obj < opts.tol_obj && rel_grad < STATIONARITY_TOL) {
            break;
        }
    }

    let mode_used = match (used_newton, used_fisher) {
        (true, false) => ModeUsed::Newton,
        (false, true) => ModeUsed::Fisher,
        (true, true) => ModeUsed::Mixed,
        (false, false) if opts.mode == WeightMode::Newton => ModeUsed::Newton,
        (false, false) => ModeUsed::Fisher,
    };
    let (edf, edf_ridge) = trace_of_smoother(basis, &eval.hess, lambda, opts.ridge);
    let mu_hat = theta.iter().map(|&t| fam.mean(t)).collect();
    Ok(FitResult {
        coefs,
        alpha,
        lambda,
        theta_hat: theta,
        mu_hat,
        objective: obj,
        edf,
        iterations,
        converged: rel_grad < STATIONARITY_TOL,
        mode_used,
        gradient_norm: rel_grad,
        ridge_used: ridge_used || edf_ridge,
        trace,
    })
}

/// `Tr{(BᵀDB + 2λP)⁻¹ BᵀDB}` for curvature weights `d`; the flag reports ridge jitter.
pub(crate) fn trace_of_smoother(basis: &SplineBasis, d: &[f64], lambda: f64, ridge: f64) -> (f64, bool) {
    let split = basis.split();
    let cross = split.rotate(&basis.weighted_cross(d));
    let a = split.penalized(&basis.weighted_cross(d), lambda);
    if let Some(x) = linalg::solve_matrix(&a, &cross) {
        return (x.trace(), false);
    }
    let jittered = linalg::with_ridge(&a, ridge.max(1e-10));
    match linalg::solve_matrix(&jittered, &cross) {
        Some(x) => (x.trace(), true),
        None => (f64::NAN, true),
    }
}

/// Effective degrees of freedom of a fit, using the observed loss curvature at the fit.
pub fn effective_df(basis: &SplineBasis, fam: &Family, alpha: f64, lambda: f64, fit: &FitResult, y: &[f64]) -> (f64, bool) {
    let hess: Vec<f64> = y.iter().zip(&fit.theta_hat).map(|(&yi, &ti)| eval_point(fam, alpha, yi, ti).loss.hess).collect();
    trace_of_smoother(basis, &hess, lambda, SolverOptions::default().ridge)
}

/// Width of the running-median window used by the initial values.
pub const RUNNING_MEDIAN_WINDOW: usize = 7;

/// Running median of `y` in the order of the design points.
pub(crate) fn running_median(points: &[f64], y: &[f64], window: usize) -> Vec<f64> {
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a].total_cmp(&points[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let half = window / 2;
    let mut out = vec![0.0; n];
    for (k, &i) in order.iter().enumerate() {
        let lo = k.saturating_sub(half);
        let hi = (k + half + 1).min(n);
        out[i] = crate::family::median(&sorted[lo..hi]);
    }
    out
}

/// The two candidate starting points of [`initialize`].
#[derive(Debug, Clone)]
pub struct Starts {
    /// Likelihood fit on winsorized responses.
    pub huberized: Vec<f64>,
    /// Least-squares fit to the link-transformed running median.
    pub running_median: Vec<f64>,
}

fn clamp_mean(fam: &Family, mu: f64, y_scale: f64) -> f64 {
    match fam.kind() {
        FamilyKind::Gaussian => mu,
        FamilyKind::Bernoulli => mu.clamp(0.01, 0.99),
        FamilyKind::Poisson => mu.max(0.1),
        FamilyKind::Exponential => mu.max(1e-3 * y_scale.max(1e-12)),
    }
}

/// Winsorized responses for the huberized likelihood start.
pub(crate) fn huberized_responses(y: &[f64], smooth: &[f64], fam: &Family) -> Vec<f64> {
    y.iter()
        .zip(smooth)
        .map(|(&yi, &m)| match fam.kind() {
            FamilyKind::Gaussian => {
                let s = 3.0 * fam.dispersion().sqrt();
                yi.clamp(m - s, m + s)
            }
            FamilyKind::Bernoulli => yi,
            FamilyKind::Poisson => {
                let s = 3.0 * m.max(1.0).sqrt();
                yi.clamp((m - s).max(0.0), m + s).round()
            }
            FamilyKind::Exponential => yi.min(4.0 * m.max(f64::MIN_POSITIVE)),
        })
        .collect()
}

/// Penalized least-squares fit of a spline to `target` values at the design points.
pub(crate) fn smooth_targets(basis: &SplineBasis, target: &[f64], lambda: f64, ridge: f64) -> Result<Vec<f64>> {
    let split = basis.split();
    let a = split.penalized(&basis.weighted_cross(&vec![1.0; target.len()]), lambda);
    let b = split.to_rotated(&basis.transpose_apply(target));
    let sol = linalg::solve_spd(&a, &b)
        .or_else(|| linalg::solve_spd(&linalg::with_ridge(&a, ridge), &b))
        .or_else(|| linalg::solve_spd(&linalg::with_ridge(&a, 1e-6), &b))
        .ok_or_else(|| Error::SingularSystem("least-squares start is singular".into()))?;
    Ok(split.from_rotated(&sol).iter().copied().collect())
}

/// Computes both starting points at penalty `λ`.
pub fn initial_starts(y: &[f64], basis: &SplineBasis, fam: &Family, lambda: f64, opts: &SolverOptions) -> Result<Starts> {
    let smooth = running_median(basis.points(), y, RUNNING_MEDIAN_WINDOW);
    let wins = huberized_responses(y, &smooth, fam);
    initial_starts_with(y, basis, fam, lambda, opts, &smooth, &wins, None)
}

/// [`initial_starts`] with precomputed running median and winsorized responses;
/// `warm` is an extra start for the winsorized likelihood fit.
#[allow(clippy::too_many_arguments)]
pub(crate) fn initial_starts_with(
    y: &[f64],
    basis: &SplineBasis,
    fam: &Family,
    lambda: f64,
    opts: &SolverOptions,
    smooth: &[f64],
    wins: &[f64],
    warm: Option<&[f64]>,
) -> Result<Starts> {
    let y_scale = crate::family::median(&y.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let link_target: Vec<f64> = smooth.iter().map(|&m| fam.link(clamp_mean(fam, m, y_scale))).collect();
    let running = smooth_targets(basis, &link_target, lambda, opts.ridge)?;
    let mut candidates: Vec<&[f64]> = Vec::with_capacity(2);
    if let Some(w) = warm {
        candidates.push(w);
    }
    candidates.push(&running);
    let start = best_start(candidates, basis, fam, 0.0, lambda, wins).map(|(c, _)| c.to_vec());
    let huberized = match start.map(|c| fit(wins, basis, fam, 0.0, lambda, &c, opts)) {
        Some(Ok(r)) => r.coefs,
        _ => running.clone(),
    };
    Ok(Starts { huberized, running_median: running })
}

/// Picks whichever candidate has the lower penalized objective at `(α, λ)`; earlier candidates win ties.
pub(crate) fn best_start<'a>(
    candidates: impl IntoIterator<Item = &'a [f64]>,
    basis: &SplineBasis,
    fam: &Family,
    alpha: f64,
    lambda: f64,
    y: &[f64],
) -> Option<(&'a [f64], f64)> {
    let mut best: Option<(&[f64], f64)> = None;
    for c in candidates {
        let theta = basis.apply(c);
        let obj = objective_at(&theta, c, basis, fam, alpha, lambda, y);
        if obj.is_finite() && best.is_none_or(|(_, b)| obj < b) {
            best = Some((c, obj));
        }
    }
    best
}

/// Starting coefficients for a fit at `(α, λ)`: the better of a likelihood fit to
/// winsorized responses and a spline fit to the link-transformed running median.
pub fn initialize(
    y: &[f64],
    basis: &SplineBasis,
    fam: &Family,
    alpha: f64,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    if y.len() != basis.n() {
        return Err(Error::Dimension(format!("{} responses for {} design points", y.len(), basis.n())));
    }
    for &yi in y {
        fam.check_response(yi)?;
    }
    let starts = initial_starts(y, basis, fam, lambda, opts)?;
    best_start([starts.huberized.as_slice(), starts.running_median.as_slice()], basis, fam, alpha, lambda, y)
        .map(|(c, _)| c.to_vec())
        .ok_or_else(|| Error::BadInit("both starting values have non-finite objective".into()))
}

/// Fits every `α` in an ascending grid at fixed `λ`, each from the previous
/// solution and from [`initialize`], keeping the lower final objective.
pub fn fit_alpha_path(
    y: &[f64],
    basis: &SplineBasis,
    fam: &Family,
    alpha_grid: &[f64],
    lambda: f64,
    opts: &SolverOptions,
) -> Vec<Result<FitResult>> {
    if alpha_grid.windows(2).any(|w| w[0] > w[1]) {
        return alpha_grid
            .iter()
            .map(|_| Err(Error::Domain("alpha grid must be ascending".into())))
            .collect();
    }
    let mut out = Vec::with_capacity(alpha_grid.len());
    let mut previous: Option<Vec<f64>> = None;
    for &alpha in alpha_grid {
        let fresh = initialize(y, basis, fam, alpha, lambda, opts).and_then(|c| fit(y, basis, fam, alpha, lambda, &c, opts));
        let warm = previous.as_ref().map(|c| fit(y, basis, fam, alpha, lambda, c, opts));
        let chosen = match (fresh, warm) {
            (Ok(a), Some(Ok(b))) => Ok(if b.objective < a.objective { b } else { a }),
            (Ok(a), _) => Ok(a),
            (Err(_), Some(Ok(b))) => Ok(b),
            (Err(e), _) => Err(e),
        };
        if let Ok(r) = &chosen {
            previous = Some(r.coefs.clone());
        }
        out.push(chosen);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::{assemble, build_knots, KnotStrategy};

    fn design(n: usize) -> Vec<f64> {
        (1..=n).map(|i| i as f64 / (n as f64 + 1.0)).collect()
    }

    #[test]
    fn running_median_window() {
        let t = [0.5, 0.1, 0.3, 0.2, 0.4];
        let y = [5.0, 1.0, 3.0, 100.0, 4.0];
        let rm = running_median(&t, &y, 3);
        // ordered y: 1, 100, 3, 4, 5
        assert_eq!(rm, vec![4.5, 50.5, 4.0, 3.0, 4.0]);
    }

    #[test]
    fn bernoulli_all_zero_start_is_finite() {
        let t = design(60);
        let kv = build_knots(&t, 4, 2, KnotStrategy::Auto).unwrap();
        let basis = assemble(&kv, &t, 2).unwrap();
        let y = vec![0.0; 60];
        let fam = Family::bernoulli();
        let c = initialize(&y, &basis, &fam, 0.5, 1.0, &SolverOptions::default()).unwrap();
        assert!(c.iter().all(|v| v.is_finite()));
        let starts = initial_starts(&y, &basis, &fam, 1.0, &SolverOptions::default()).unwrap();
        let theta = basis.apply(&starts.running_median);
        for th in theta {
            assert!((th - (0.01f64 / 0.99).ln()).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let t = design(30);
        let kv = build_knots(&t, 4, 2, KnotStrategy::Explicit(5)).unwrap();
        let basis = assemble(&kv, &t, 2).unwrap();
        let y = vec![1.0; 30];
        let fam = Family::poisson();
        let init = vec![0.0; basis.dim()];
        assert!(matches!(fit(&y, &basis, &fam, 0.5, -1.0, &init, &SolverOptions::default()), Err(Error::Domain(_))));
        let nan = vec![f64::NAN; basis.dim()];
        assert!(matches!(fit(&y, &basis, &fam, 0.5, 1.0, &nan, &SolverOptions::default()), Err(Error::BadInit(_))));
        let huge = vec![100.0; basis.dim()];
        assert!(matches!(fit(&y, &basis, &fam, 0.5, 1.0, &huge, &SolverOptions::default()), Err(Error::BadInit(_))));
        assert!(matches!(fit(&y[..10], &basis, &fam, 0.5, 1.0, &init, &SolverOptions::default()), Err(Error::Dimension(_))));
    }
}
