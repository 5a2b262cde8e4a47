//! Monte Carlo comparison of DPD(α̂), DPD(1) and the penalized likelihood fit
//! (GAM) on contaminated samples from two test functions.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{self, Family, FamilyKind};
use crate::pirls::SolverOptions;
use crate::selection::{self, LambdaSelector};
use crate::spline::{assemble, build_knots, KnotStrategy};

/// Standard deviation of the contaminating Gaussian component.
pub const OUTLIER_SD: f64 = 9.0;
/// Multiplier of the mean for contaminating Poisson draws.
pub const OUTLIER_POISSON_FACTOR: f64 = 3.0;
/// Contamination levels of the reference study.
pub const REFERENCE_EPS: [f64; 3] = [0.0, 0.05, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFunction {
    G1,
    G2,
}

impl std::fmt::Display for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TestFunction::G1 => "g1",
            TestFunction::G2 => "g2",
        })
    }
}

impl std::str::FromStr for TestFunction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "g1" => Ok(TestFunction::G1),
            "g2" => Ok(TestFunction::G2),
            _ => Err(Error::InvalidScenario(format!("unknown test function '{s}' (expected g1 or g2)"))),
        }
    }
}

/// Test function on the canonical-parameter scale.
pub fn test_function(id: TestFunction, t: f64) -> f64 {
    match id {
        TestFunction::G1 => -(25.0 * t / 6.0).sin() / 0.8 - 1.0,
        TestFunction::G2 => 1.8 * (3.4 * t * t).sin(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub family: FamilyKind,
    pub test_fn: TestFunction,
    pub n: usize,
    pub eps: f64,
    pub seed: u64,
}

impl Scenario {
    /// Checks the benchmark domain: Gaussian/Bernoulli/Poisson, `n >= 20`, `0 <= eps < 0.5`.
    pub fn validate(&self) -> Result<()> {
        if self.family == FamilyKind::Exponential {
            return Err(Error::InvalidScenario("no contamination scheme for the exponential family".into()));
        }
        if self.n < 20 {
            return Err(Error::InvalidScenario(format!("n must be >= 20, got {}", self.n)));
        }
        if !(0.0..0.5).contains(&self.eps) {
            return Err(Error::InvalidScenario(format!("eps must be in [0, 0.5), got {}", self.eps)));
        }
        Ok(())
    }

    pub fn design(&self) -> Vec<f64> {
        (1..=self.n).map(|i| i as f64 / (self.n as f64 + 1.0)).collect()
    }

    /// True means `μ(t_i)`.
    pub fn true_mean(&self) -> Vec<f64> {
        let fam = Family::from_kind(self.family, 1.0).expect("unit dispersion is valid");
        self.design().iter().map(|&t| fam.mean(test_function(self.test_fn, t))).collect()
    }
}

/// One simulated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimData {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub mu: Vec<f64>,
    pub contaminated: Vec<bool>,
}

/// Sample for replicate 0 of the scenario. Accepts any `eps` in `[0, 1]`.
pub fn generate(s: &Scenario) -> Result<SimData> {
    generate_replicate(s, 0)
}

/// Sample for replicate `rep`: stream `rep` of a ChaCha8 generator seeded with `s.seed`.
pub fn generate_replicate(s: &Scenario, rep: u64) -> Result<SimData> {
    if s.family == FamilyKind::Exponential {
        return Err(Error::InvalidScenario("no contamination scheme for the exponential family".into()));
    }
    if !(0.0..=1.0).contains(&s.eps) {
        return Err(Error::InvalidScenario(format!("eps must be in [0, 1], got {}", s.eps)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    rng.set_stream(rep);
    let t = s.design();
    let mu = s.true_mean();
    let mut y = Vec::with_capacity(s.n);
    let mut contaminated = Vec::with_capacity(s.n);
    for &m in &mu {
        let bad = s.eps > 0.0 && rng.random::<f64>() < s.eps;
        let value = match s.family {
            FamilyKind::Gaussian => {
                let sd = if bad { OUTLIER_SD } else { 1.0 };
                Normal::new(m, sd).expect("positive sd").sample(&mut rng)
            }
            FamilyKind::Bernoulli => {
                let draw = if rng.random::<f64>() < m { 1.0 } else { 0.0 };
                if bad {
                    1.0 - draw
                } else {
                    draw
                }
            }
            FamilyKind::Poisson => {
                let rate = if bad { OUTLIER_POISSON_FACTOR * m } else { m };
                Poisson::new(rate).expect("positive rate").sample(&mut rng)
            }
            FamilyKind::Exponential => unreachable!(),
        };
        y.push(value);
        contaminated.push(bad);
    }
    Ok(SimData { t, y, mu, contaminated })
}

/// Estimators compared in the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimator {
    /// DPD with `α` chosen by AMISE.
    #[serde(rename = "dpd-adaptive")]
    DpdAdaptive,
    /// DPD at `α = 1`.
    #[serde(rename = "dpd-1")]
    DpdOne,
    /// Penalized likelihood, `α = 0`.
    #[serde(rename = "gam")]
    Gam,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::DpdAdaptive, Estimator::DpdOne, Estimator::Gam];

    pub fn label(self) -> &'static str {
        match self {
            Estimator::DpdAdaptive => "DPD(a^)",
            Estimator::DpdOne => "DPD(1)",
            Estimator::Gam => "GAM",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    /// Mean MSE over successful replicates; `None` when all failed.
    pub mean_mse: Option<f64>,
    pub median_mse: Option<f64>,
    /// MSE per replicate in replicate order; `None` marks a failed fit.
    pub replicate_mse: Vec<Option<f64>>,
    pub replicates: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: Scenario,
    pub reps: usize,
    pub estimators: Vec<EstimatorSummary>,
    /// `α̂` per replicate (`None` when selection failed).
    pub alpha_hat: Vec<Option<f64>>,
    pub note: Option<String>,
    pub wall_time_secs: f64,
}

impl BenchReport {
    pub fn summary(&self, e: Estimator) -> &EstimatorSummary {
        self.estimators.iter().find(|s| s.estimator == e).expect("every estimator is reported")
    }

    /// Estimators that failed on every replicate.
    pub fn total_failures(&self) -> Vec<Estimator> {
        self.estimators.iter().filter(|s| s.mean_mse.is_none()).map(|s| s.estimator).collect()
    }

    /// Aligned text table with MSEs scaled by 100.
    pub fn table(&self) -> String {
        let s = &self.scenario;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {}  n={}  eps={:.2}  reps={}  seed={}",
            s.family, s.test_fn, s.n, s.eps, self.reps, s.seed
        );
        let _ = writeln!(out, "{:<10} {:>14} {:>16} {:>9}", "estimator", "mean MSE x100", "median MSE x100", "failures");
        for e in &self.estimators {
            let fmt = |v: Option<f64>| v.map(|x| format!("{:.3}", 100.0 * x)).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<10} {:>14} {:>16} {:>9}",
                e.estimator.label(),
                fmt(e.mean_mse),
                fmt(e.median_mse),
                e.failures
            );
        }
        if let Some(note) = &self.note {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }
}

/// MSEs of the three estimators on one replicate, plus `α̂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateResult {
    pub alpha_hat: Option<f64>,
    pub mse: [Option<f64>; 3],
}

fn mse(mu_hat: &[f64], mu: &[f64]) -> f64 {
    mu_hat.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / mu.len() as f64
}

/// Family used for fitting a sample: Gaussian dispersion is estimated robustly.
pub fn working_family(kind: FamilyKind, y: &[f64]) -> Result<Family> {
    match kind {
        FamilyKind::Gaussian => Family::gaussian(family::robust_scale_gaussian(y)?),
        k => Family::from_kind(k, 1.0),
    }
}

/// Fits all estimators to one replicate with default grids, cubic splines and `m = 2`.
pub fn run_replicate(s: &Scenario, rep: u64) -> Result<ReplicateResult> {
    let data = generate_replicate(s, rep)?;
    let fam = working_family(s.family, &data.y)?;
    let kv = build_knots(&data.t, 4, 2, KnotStrategy::Auto)?;
    let basis = assemble(&kv, &data.t, 2)?;
    let grid = selection::alpha_grid(selection::DEFAULT_ALPHA_POINTS);
    let opts = SolverOptions::default();
    let sel = match selection::select_alpha(&data.y, &basis, &fam, &grid, &LambdaSelector::DefaultGrid, &opts) {
        Ok(sel) => sel,
        Err(_) => return Ok(ReplicateResult { alpha_hat: None, mse: [None; 3] }),
    };
    let adaptive = Some(mse(&sel.selected().mu_hat, &data.mu));
    let one = sel.fit_at(1.0).map(|f| mse(&f.mu_hat, &data.mu));
    let gam = sel.fit_at(0.0).map(|f| mse(&f.mu_hat, &data.mu));
    Ok(ReplicateResult { alpha_hat: Some(sel.report.alpha_hat), mse: [adaptive, one, gam] })
}

fn summarize(estimator: Estimator, values: Vec<Option<f64>>) -> EstimatorSummary {
    let ok: Vec<f64> = values.iter().flatten().copied().collect();
    let (mean_mse, median_mse) = if ok.is_empty() {
        (None, None)
    } else {
        (Some(ok.iter().sum::<f64>() / ok.len() as f64), Some(family::median(&ok)))
    };
    EstimatorSummary { estimator, mean_mse, median_mse, replicates: values.len(), failures: values.len() - ok.len(), replicate_mse: values }
}

/// Runs `reps` replicates (in parallel) and aggregates them in replicate order.
pub fn run_benchmark(s: &Scenario, reps: usize) -> Result<BenchReport> {
    s.validate()?;
    if reps == 0 {
        return Err(Error::InvalidScenario("reps must be >= 1".into()));
    }
    let start = Instant::now();
    let results: Vec<Result<ReplicateResult>> = (0..reps as u64).into_par_iter().map(|r| run_replicate(s, r)).collect();
    let results: Vec<ReplicateResult> = results.into_iter().collect::<Result<_>>()?;
    let estimators = Estimator::ALL
        .iter()
        .enumerate()
        .map(|(k, &e)| summarize(e, results.iter().map(|r| r.mse[k]).collect()))
        .collect();
    let note = (!REFERENCE_EPS.contains(&s.eps))
        .then(|| format!("eps={} is outside the reference levels {{0, 0.05, 0.1}}", s.eps));
    Ok(BenchReport {
        scenario: *s,
        reps,
        estimators,
        alpha_hat: results.iter().map(|r| r.alpha_hat).collect(),
        note,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}
