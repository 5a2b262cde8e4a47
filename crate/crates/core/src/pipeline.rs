//! End-to-end fit of a user dataset: rescaling, basis construction, selection,
//! fitting, residuals and curve samples bundled into a serializable artifact.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, ResidualReport};
use crate::error::{Error, Result};
use crate::family::{self, Family, FamilyKind};
use crate::pirls::{FitResult, SolverOptions};
use crate::selection::{self, LambdaSelector, SelectionReport};
use crate::spline::{assemble, build_knots, KnotStrategy, SplineBasis};

/// Number of equidistant curve samples stored in an artifact.
pub const CURVE_SAMPLES: usize = 512;

/// Covariate and response columns; the covariate is mapped affinely onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub t_original: Vec<f64>,
    pub t_unit: Vec<f64>,
    pub y: Vec<f64>,
    /// `(min, max)` of the original covariate.
    pub range: (f64, f64),
}

impl Dataset {
    pub fn new(t: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if t.len() != y.len() {
            return Err(Error::Dimension(format!("{} covariate values but {} responses", t.len(), y.len())));
        }
        if let Some(i) = t.iter().zip(&y).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidDesign(format!("non-finite value in observation {}", i + 1)));
        }
        let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Err(Error::InvalidDesign("covariate needs at least two distinct values".into()));
        }
        let t_unit = t.iter().map(|&v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect();
        Ok(Self { t_original: t, t_unit, y, range: (lo, hi) })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn to_original(&self, u: f64) -> f64 {
        self.range.0 + u * (self.range.1 - self.range.0)
    }

    /// Responses ordered by the covariate.
    fn y_by_t(&self) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..self.n()).collect();
        idx.sort_by(|&a, &b| self.t_unit[a].total_cmp(&self.t_unit[b]).then(a.cmp(&b)));
        idx.iter().map(|&i| self.y[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "value")]
pub enum ParamSpec {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub family: FamilyKind,
    pub alpha: ParamSpec,
    pub lambda: ParamSpec,
    pub m: usize,
    pub p: usize,
    pub knots: KnotStrategy,
    pub alpha_grid_points: usize,
    /// Gaussian dispersion; estimated robustly from the data when absent.
    pub dispersion: Option<f64>,
    pub cutoff: f64,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl FitConfig {
    pub fn new(family: FamilyKind) -> Self {
        Self {
            family,
            alpha: ParamSpec::Auto,
            lambda: ParamSpec::Auto,
            m: 2,
            p: 4,
            knots: KnotStrategy::Auto,
            alpha_grid_points: selection::DEFAULT_ALPHA_POINTS,
            dispersion: None,
            cutoff: diagnostics::DEFAULT_CUTOFF,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSamples {
    pub t_unit: Vec<f64>,
    pub t_original: Vec<f64>,
    pub theta: Vec<f64>,
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub config: FitConfig,
    pub dataset: Dataset,
    /// Dispersion used by the fitted family (1 for non-Gaussian families).
    pub dispersion: f64,
    pub fit: FitResult,
    pub selection: Option<SelectionReport>,
    pub residuals: ResidualReport,
    pub curve: CurveSamples,
    pub input_checksum: String,
}

impl FitArtifact {
    pub fn family(&self) -> Result<Family> {
        Family::from_kind(self.config.family, self.dispersion)
    }
}

/// Pipeline stage that produced an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Input,
    Basis,
    Selection,
    Diagnostics,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Input => "input validation",
            Stage::Basis => "basis construction",
            Stage::Selection => "model selection",
            Stage::Diagnostics => "diagnostics",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} failed: {error}")]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

fn at(stage: Stage) -> impl FnOnce(Error) -> StageError {
    move |error| StageError { stage, error }
}

fn sample_curve(basis: &SplineBasis, fam: &Family, data: &Dataset, coefs: &[f64]) -> Result<CurveSamples> {
    let t_unit: Vec<f64> = (0..CURVE_SAMPLES).map(|k| k as f64 / (CURVE_SAMPLES - 1) as f64).collect();
    let theta = t_unit.iter().map(|&u| basis.evaluate(coefs, u, 0)).collect::<Result<Vec<_>>>()?;
    Ok(CurveSamples {
        t_original: t_unit.iter().map(|&u| data.to_original(u)).collect(),
        mu: theta.iter().map(|&th| fam.mean(th)).collect(),
        t_unit,
        theta,
    })
}

/// Runs the full pipeline on `data`.
pub fn run_fit(data: &Dataset, config: &FitConfig, input_checksum: &str) -> std::result::Result<FitArtifact, StageError> {
    let dispersion = match (config.family, config.dispersion) {
        (FamilyKind::Gaussian, Some(d)) => d,
        (FamilyKind::Gaussian, None) => family::robust_scale_gaussian(&data.y_by_t()).map_err(at(Stage::Input))?,
        _ => 1.0,
    };
    let fam = Family::from_kind(config.family, dispersion).map_err(at(Stage::Input))?;
    if let Some(i) = data.y.iter().position(|&v| !fam.in_support(v)) {
        return Err(at(Stage::Input)(Error::Domain(format!(
            "response {} in observation {} is outside the {} support",
            data.y[i],
            i + 1,
            config.family
        ))));
    }
    for spec in [config.alpha, config.lambda] {
        if let ParamSpec::Fixed(v) = spec {
            if !v.is_finite() || v < 0.0 {
                return Err(at(Stage::Input)(Error::Domain(format!("fixed parameter {v} must be finite and >= 0"))));
            }
        }
    }
    if let ParamSpec::Fixed(l) = config.lambda {
        if l <= 0.0 {
            return Err(at(Stage::Input)(Error::Domain("lambda must be positive".into())));
        }
    }

    let kv = build_knots(&data.t_unit, config.p, config.m, config.knots).map_err(at(Stage::Basis))?;
    let basis = assemble(&kv, &data.t_unit, config.m).map_err(at(Stage::Basis))?;
    let lambda_selector = match config.lambda {
        ParamSpec::Auto => LambdaSelector::DefaultGrid,
        ParamSpec::Fixed(l) => LambdaSelector::Grid(vec![l]),
    };

    let (fit, report) = match config.alpha {
        ParamSpec::Auto => {
            let grid = selection::alpha_grid(config.alpha_grid_points);
            let sel = selection::select_alpha(&data.y, &basis, &fam, &grid, &lambda_selector, &config.solver)
                .map_err(at(Stage::Selection))?;
            (sel.selected().clone(), Some(sel.report))
        }
        ParamSpec::Fixed(alpha) => {
            let lambdas = lambda_selector.resolve(data.n());
            let sel = selection::select_lambda(&data.y, &basis, &fam, alpha, &lambdas, &config.solver)
                .map_err(at(Stage::Selection))?;
            (sel.fit, None)
        }
    };
    let residuals =
        diagnostics::anscombe_residuals(&fam, &data.y, &fit.mu_hat, config.cutoff).map_err(at(Stage::Diagnostics))?;
    let curve = sample_curve(&basis, &fam, data, &fit.coefs).map_err(at(Stage::Diagnostics))?;
    Ok(FitArtifact {
        config: config.clone(),
        dataset: data.clone(),
        dispersion,
        fit,
        selection: report,
        residuals,
        curve,
        input_checksum: input_checksum.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rescaling() {
        let d = Dataset::new(vec![2.0, 4.0, 3.0], vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(d.t_unit, vec![0.0, 1.0, 0.5]);
        assert_eq!(d.range, (2.0, 4.0));
        assert_eq!(d.to_original(0.25), 2.5);
        assert_eq!(d.y_by_t(), vec![0.0, 2.0, 1.0]);
    }

    #[test]
    fn rejects_bad_data() {
        assert!(Dataset::new(vec![1.0, 1.0], vec![0.0, 1.0]).is_err());
        assert!(Dataset::new(vec![1.0, f64::NAN], vec![0.0, 1.0]).is_err());
        assert!(Dataset::new(vec![1.0], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn fixed_parameters_pass_through() {
        let t: Vec<f64> = (0..80).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..80).map(|i| ((i % 5) as f64).min(3.0)).collect();
        let data = Dataset::new(t, y).unwrap();
        let mut cfg = FitConfig::new(FamilyKind::Poisson);
        cfg.alpha = ParamSpec::Fixed(1.0);
        cfg.lambda = ParamSpec::Fixed(10.0);
        cfg.knots = KnotStrategy::Explicit(20);
        let art = run_fit(&data, &cfg, "x").unwrap();
        assert_eq!(art.fit.alpha, 1.0);
        assert_eq!(art.fit.lambda, 10.0);
        assert_eq!(art.curve.theta.len(), CURVE_SAMPLES);
        assert!(art.selection.is_none());
    }

    #[test]
    fn support_violation_is_an_input_error() {
        let data = Dataset::new((0..30).map(f64::from).collect(), vec![2.0; 30]).unwrap();
        let err = run_fit(&data, &FitConfig::new(FamilyKind::Bernoulli), "").unwrap_err();
        assert_eq!(err.stage, Stage::Input);
    }
}
