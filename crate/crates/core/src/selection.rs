//! Data-driven choice of the robustness parameter `α` (iterated AMISE with a
//! robust pilot) and of the penalty `λ` (AIC with a trace-based edf).

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::Family;
use crate::linalg;
use crate::loss::eval_point;
use crate::pirls::{self, best_start, FitResult, SolverOptions, Starts};
use crate::spline::{quadratic_form, SplineBasis};

/// Upper bound on pilot refinement sweeps.
pub const MAX_PILOT_ITERATIONS: usize = 10;
/// Default number of `α` candidates.
pub const DEFAULT_ALPHA_POINTS: usize = 20;
/// Default number of `λ` candidates.
pub const DEFAULT_LAMBDA_POINTS: usize = 40;

/// `n` equidistant values on `[0, 1]`, both ends included.
pub fn alpha_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..points).map(|k| k as f64 / (points - 1) as f64).collect(),
    }
}

/// 40 log-spaced values on `[1e-6 n, 1e3 n]`.
pub fn default_lambda_grid(n: usize) -> Vec<f64> {
    log_grid(1e-6 * n as f64, 1e3 * n as f64, DEFAULT_LAMBDA_POINTS)
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points).map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp()).collect()
}

/// How `λ` is chosen for each candidate `α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaSelector {
    /// The default AIC grid scaled by the sample size.
    DefaultGrid,
    /// AIC over the given ascending grid; a single value means "fixed".
    Grid(Vec<f64>),
}

impl LambdaSelector {
    pub fn resolve(&self, n: usize) -> Vec<f64> {
        match self {
            LambdaSelector::DefaultGrid => default_lambda_grid(n),
            LambdaSelector::Grid(g) => g.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AicCurve {
    pub alpha: f64,
    pub lambda: Vec<f64>,
    pub aic: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaValue {
    pub alpha: f64,
    pub value: f64,
}

/// Summary of an `α`/`λ` selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub alpha_hat: f64,
    /// `λ̂` chosen by AIC for every `α` whose fits succeeded.
    pub lambda_hat_per_alpha: Vec<AlphaValue>,
    /// AMISE over the grid from the final pilot sweep.
    pub amise_curve: Vec<AlphaValue>,
    /// `α` of the pilot used in each sweep.
    pub pilot_trace: Vec<f64>,
    pub aic_curves: Vec<AicCurve>,
    pub iterations: usize,
}

/// A finished selection: the report plus the AIC-selected fit for every `α` in the grid.
#[derive(Debug, Clone)]
pub struct Selection {
    pub report: SelectionReport,
    pub alpha_grid: Vec<f64>,
    pub fits: Vec<Option<FitResult>>,
}

impl Selection {
    /// The fit at `α̂`.
    pub fn selected(&self) -> &FitResult {
        self.fit_at(self.report.alpha_hat).expect("alpha_hat always has a fit")
    }

    pub fn fit_at(&self, alpha: f64) -> Option<&FitResult> {
        self.alpha_grid.iter().position(|&a| a == alpha).and_then(|k| self.fits[k].as_ref())
    }
}

/// Result of AIC selection at one `α`.
#[derive(Debug, Clone)]
pub struct LambdaSelection {
    pub lambda_hat: f64,
    pub curve: AicCurve,
    pub fit: FitResult,
}

/// Starting values for every `λ` of a grid, shared across `α`.
pub struct StartCache {
    lambdas: Vec<f64>,
    starts: Vec<Starts>,
}

impl StartCache {
    pub fn new(y: &[f64], basis: &SplineBasis, fam: &Family, lambdas: &[f64], opts: &SolverOptions) -> Result<Self> {
        let smooth = pirls::running_median(basis.points(), y, pirls::RUNNING_MEDIAN_WINDOW);
        let wins = pirls::huberized_responses(y, &smooth, fam);
        let mut starts = Vec::with_capacity(lambdas.len());
        let mut previous: Option<Vec<f64>> = None;
        for &lambda in lambdas {
            let one = pirls::initial_starts_with(y, basis, fam, lambda, opts, &smooth, &wins, previous.as_deref())?;
            previous = Some(one.huberized.clone());
            starts.push(one);
        }
        Ok(Self { lambdas: lambdas.to_vec(), starts })
    }

    fn get(&self, k: usize) -> &Starts {
        &self.starts[k]
    }
}

fn aic_value(y: &[f64], fam: &Family, alpha: f64, fit: &FitResult) -> f64 {
    let data: f64 = y.iter().zip(&fit.theta_hat).map(|(&yi, &ti)| eval_point(fam, alpha, yi, ti).loss.value).sum();
    2.0 * data + 2.0 * fit.edf
}

/// AIC `2 Σ l_α(y_i, ĝ(t_i)) + 2 edf` of a fit.
pub fn aic(y: &[f64], fam: &Family, fit: &FitResult) -> f64 {
    aic_value(y, fam, fit.alpha, fit)
}

fn check_lambda_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::SelectionFailed("empty lambda grid".into()));
    }
    if grid.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::Domain("lambda grid values must be positive".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("lambda grid must be strictly ascending".into()));
    }
    Ok(())
}

/// Chooses `λ` by AIC at fixed `α`, warm-starting along the ascending grid.
pub fn select_lambda(
    y: &[f64],
    basis: &SplineBasis,
    fam: &Family,
    alpha: f64,
    lambda_grid: &[f64],
    opts: &SolverOptions,
) -> Result<LambdaSelection> {
    check_lambda_grid(lambda_grid)?;
    let cache = StartCache::new(y, basis, fam, lambda_grid, opts)?;
    select_lambda_cached(y, basis, fam, alpha, &cache, opts)
}

pub fn select_lambda_cached(
    y: &[f64],
    basis: &SplineBasis,
    fam: &Family,
    alpha: f64,
    cache: &StartCache,
    opts: &SolverOptions,
) -> Result<LambdaSelection> {
    let mut previous: Option<Vec<f64>> = None;
    let mut best: Option<(f64, FitResult)> = None;
    let mut curve = AicCurve { alpha, lambda: Vec::new(), aic: Vec::new() };
    let mut last_err = None;
    for (k, &lambda) in cache.lambdas.iter().enumerate() {
        let starts = cache.get(k);
        let mut candidates: Vec<&[f64]> = Vec::with_capacity(3);
        if let Some(p) = previous.as_deref() {
            candidates.push(p);
        }
        candidates.push(&starts.huberized);
        candidates.push(&starts.running_median);
        let Some((start, _)) = best_start(candidates, basis, fam, alpha, lambda, y) else {
            last_err = Some(Error::BadInit(format!("no finite start at lambda={lambda}")));
            continue;
        };
        let start = start.to_vec();
        match pirls::fit(y, basis, fam, alpha, lambda, &start, opts) {
            Ok(fit) => {
                let value = aic_value(y, fam, alpha, &fit);
                previous = Some(fit.coefs.clone());
                curve.lambda.push(lambda);
                curve.aic.push(value);
                if value.is_finite() && best.as_ref().is_none_or(|(b, _)| value < *b) {
                    best = Some((value, fit));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((_, fit)) => Ok(LambdaSelection { lambda_hat: fit.lambda, curve, fit }),
        None => Err(Error::SelectionFailed(format!(
            "every lambda failed at alpha={alpha}: {}",
            last_err.map(|e| e.to_string()).unwrap_or_else(|| "non-finite AIC".into())
        ))),
    }
}

/// Plug-in AMISE of `fit` against `pilot`: squared `H`-norm of the coefficient
/// difference plus the sandwich variance trace. The flag reports ridge jitter.
pub fn amise(fit: &FitResult, pilot: &FitResult, basis: &SplineBasis, fam: &Family, y: &[f64]) -> Result<(f64, bool)> {
    if fit.coefs.len() != basis.dim() || pilot.coefs.len() != basis.dim() {
        return Err(Error::Dimension("fits do not share the basis".into()));
    }
    let diff: Vec<f64> = fit.coefs.iter().zip(&pilot.coefs).map(|(a, b)| a - b).collect();
    let bias = quadratic_form(basis.gram(), &diff);
    let (mut d, mut c) = (Vec::with_capacity(y.len()), Vec::with_capacity(y.len()));
    for (&yi, &ti) in y.iter().zip(&fit.theta_hat) {
        let l = eval_point(fam, fit.alpha, yi, ti).loss;
        d.push(l.hess);
        c.push(l.grad * l.grad);
    }
    // trace is invariant under the orthogonal change of coordinates
    let split = basis.split();
    let m = split.penalized(&basis.weighted_cross(&d), fit.lambda);
    let meat = split.rotate(&basis.weighted_cross(&c));
    let gram = split.rotate(basis.gram());
    let identity = DMatrix::identity(basis.dim(), basis.dim());
    let (inv, flagged) = match linalg::solve_matrix(&m, &identity) {
        Some(inv) => (inv, false),
        None => {
            let jittered = linalg::with_ridge(&m, SolverOptions::default().ridge);
            let inv = linalg::solve_matrix(&jittered, &identity)
                .ok_or_else(|| Error::SingularSystem("AMISE system singular after ridge".into()))?;
            (inv, true)
        }
    };
    let variance = (gram * &inv * meat * &inv).trace();
    Ok((bias + variance, flagged))
}

/// Selects `α` from `alpha_grid` by iterated AMISE minimization, with `λ` chosen
/// by AIC for every candidate.
pub fn select_alpha(
    y: &[f64],
    basis: &SplineBasis,
    fam: &Family,
    alpha_grid: &[f64],
    lambda_selector: &LambdaSelector,
    opts: &SolverOptions,
) -> Result<Selection> {
    if alpha_grid.is_empty() {
        return Err(Error::SelectionFailed("empty alpha grid".into()));
    }
    if alpha_grid.iter().any(|&a| !(a >= 0.0 && a.is_finite())) || alpha_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("alpha grid must be non-negative and strictly ascending".into()));
    }
    let lambdas = lambda_selector.resolve(y.len());
    check_lambda_grid(&lambdas)?;
    let cache = StartCache::new(y, basis, fam, &lambdas, opts)?;
    let per_alpha: Vec<Option<LambdaSelection>> = alpha_grid
        .par_iter()
        .map(|&alpha| select_lambda_cached(y, basis, fam, alpha, &cache, opts).ok())
        .collect();
    if per_alpha.iter().all(Option::is_none) {
        return Err(Error::SelectionFailed("every alpha on the grid failed".into()));
    }

    let fits: Vec<Option<FitResult>> = per_alpha.iter().map(|s| s.as_ref().map(|s| s.fit.clone())).collect();
    let aic_curves = per_alpha.iter().flatten().map(|s| s.curve.clone()).collect();
    let lambda_hat_per_alpha = per_alpha
        .iter()
        .flatten()
        .map(|s| AlphaValue { alpha: s.curve.alpha, value: s.lambda_hat })
        .collect();

    // initial pilot: the alpha = 1 fit, or the most robust available one
    let pilot_index = match alpha_grid.iter().position(|&a| a == 1.0).filter(|&k| fits[k].is_some()) {
        Some(k) => k,
        None => (0..alpha_grid.len()).rev().find(|&k| fits[k].is_some()).expect("at least one fit"),
    };
    let mut pilot = pilot_index;
    let mut previous_argmin = pilot_index;
    let mut visited = vec![];
    let mut pilot_trace = Vec::new();
    let mut amise_curve = Vec::new();
    let mut iterations = 0;
    let mut alpha_hat_index = pilot_index;
    while iterations < MAX_PILOT_ITERATIONS {
        iterations += 1;
        pilot_trace.push(alpha_grid[pilot]);
        let pilot_fit = fits[pilot].as_ref().expect("pilot has a fit");
        amise_curve.clear();
        let mut argmin: Option<(usize, f64)> = None;
        for (k, fit) in fits.iter().enumerate() {
            let Some(fit) = fit else { continue };
            let Ok((value, _)) = amise(fit, pilot_fit, basis, fam, y) else { continue };
            if !value.is_finite() {
                continue;
            }
            amise_curve.push(AlphaValue { alpha: alpha_grid[k], value });
            // ties go to the larger alpha
            if argmin.is_none_or(|(_, v)| value <= v) {
                argmin = Some((k, value));
            }
        }
        let Some((k, _)) = argmin else {
            return Err(Error::SelectionFailed("AMISE undefined for every alpha".into()));
        };
        alpha_hat_index = k;
        if k == previous_argmin || visited.contains(&k) {
            break;
        }
        visited.push(previous_argmin);
        previous_argmin = k;
        pilot = k;
    }

    let report = SelectionReport {
        alpha_hat: alpha_grid[alpha_hat_index],
        lambda_hat_per_alpha,
        amise_curve,
        pilot_trace,
        aic_curves,
        iterations,
    };
    Ok(Selection { report, alpha_grid: alpha_grid.to_vec(), fits })
}
