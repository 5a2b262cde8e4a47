use anyhow::anyhow;
use dpd_spline::bench::{self, Scenario, TestFunction};
use dpd_spline::diagnostics;
use dpd_spline::pipeline::{self, FitConfig, ParamSpec, Stage};
use dpd_spline::{FamilyKind, KnotStrategy};

use crate::io;
use crate::{BenchArgs, DiagnoseArgs, FitArgs};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_FAILURE: u8 = 3;

pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

fn input(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: EXIT_INPUT, error: error.into() }
}

fn failure(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: EXIT_FAILURE, error: error.into() }
}

fn param(raw: &str, name: &str, check: impl Fn(f64) -> bool) -> Result<ParamSpec, Failure> {
    if raw == "auto" {
        return Ok(ParamSpec::Auto);
    }
    match raw.parse::<f64>() {
        Ok(v) if check(v) => Ok(ParamSpec::Fixed(v)),
        _ => Err(input(anyhow!("invalid --{name} '{raw}'"))),
    }
}

fn config(a: &FitArgs) -> Result<FitConfig, Failure> {
    let family: FamilyKind = a.family.parse().map_err(input)?;
    let mut cfg = FitConfig::new(family);
    cfg.alpha = param(&a.alpha, "alpha", |v| (0.0..=1.0).contains(&v))?;
    cfg.lambda = param(&a.lambda, "lambda", |v| v > 0.0 && v.is_finite())?;
    cfg.m = a.m;
    cfg.p = a.p.unwrap_or(2 * a.m);
    cfg.knots = match a.knots.as_str() {
        "auto" => KnotStrategy::Auto,
        k => KnotStrategy::Explicit(k.parse().map_err(|_| input(anyhow!("invalid --knots '{k}'")))?),
    };
    cfg.seed = a.seed;
    Ok(cfg)
}

pub fn fit(a: &FitArgs) -> Result<(), Failure> {
    let cfg = config(a)?;
    let (data, checksum) = io::read_dataset(&a.input).map_err(input)?;
    let art = pipeline::run_fit(&data, &cfg, &checksum).map_err(|e| match e.stage {
        Stage::Input | Stage::Basis => input(e),
        _ => failure(e),
    })?;
    io::write_json(&a.out, &art).map_err(failure)?;
    if let Some(path) = &a.plot_data {
        io::write_plot_data(path, &art).map_err(failure)?;
    }
    io::print(&format!(
        "alpha={} lambda={:.6e} edf={:.3} converged={} flagged={}/{}\n",
        art.fit.alpha,
        art.fit.lambda,
        art.fit.edf,
        art.fit.converged,
        art.residuals.flagged_count(),
        data.n()
    ));
    Ok(())
}

pub fn diagnose(a: &DiagnoseArgs) -> Result<(), Failure> {
    let art = io::read_artifact(&a.fit).map_err(input)?;
    let fam = art.family().map_err(input)?;
    if art.fit.mu_hat.len() != art.dataset.n() {
        return Err(input(anyhow!("artifact has {} fitted means for {} observations", art.fit.mu_hat.len(), art.dataset.n())));
    }
    let report = diagnostics::anscombe_residuals(&fam, &art.dataset.y, &art.fit.mu_hat, a.cutoff).map_err(input)?;
    io::write_residuals(&a.out, &art, &report).map_err(failure)?;
    io::print(&format!("flagged {} of {} at cutoff {}\n", report.flagged_count(), art.dataset.n(), a.cutoff));
    Ok(())
}

pub fn bench(a: &BenchArgs) -> Result<(), Failure> {
    let scenario = Scenario {
        family: a.family.parse().map_err(input)?,
        test_fn: a.testfn.parse::<TestFunction>().map_err(input)?,
        n: a.n,
        eps: a.eps,
        seed: a.seed,
    };
    scenario.validate().map_err(input)?;
    let report = bench::run_benchmark(&scenario, a.reps).map_err(failure)?;
    io::write_json(&a.out, &report).map_err(failure)?;
    if a.table {
        io::print(&report.table());
    }
    let failed = report.total_failures();
    if !failed.is_empty() {
        let names: Vec<&str> = failed.iter().map(|e| e.label()).collect();
        return Err(failure(anyhow!("estimators failed on every replicate: {}", names.join(", "))));
    }
    Ok(())
}
