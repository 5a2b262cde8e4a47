use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dpd_spline::bench::{generate_replicate, BenchReport, Scenario, TestFunction};
use dpd_spline::pipeline::FitArtifact;
use dpd_spline::FamilyKind;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dpdspline"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn write_csv(file: &Path, t: &[f64], y: &[f64]) {
    let mut s = String::from("t,y\n");
    for (a, b) in t.iter().zip(y) {
        writeln!(s, "{a},{b}").unwrap();
    }
    fs::write(file, s).unwrap();
}

fn synthetic_n(dir: &Path, name: &str, family: FamilyKind, n: usize, eps: f64, seed: u64) -> PathBuf {
    let s = Scenario { family, test_fn: TestFunction::G1, n, eps, seed };
    let d = generate_replicate(&s, 0).unwrap();
    let file = dir.join(name);
    write_csv(&file, &d.t, &d.y);
    file
}

fn synthetic(dir: &Path, name: &str, family: FamilyKind, eps: f64, seed: u64) -> PathBuf {
    synthetic_n(dir, name, family, 150, eps, seed)
}

fn read_artifact(file: &str) -> FitArtifact {
    serde_json::from_str(&fs::read_to_string(file).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn fixed_parameters_pass_through() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synthetic(dir.path(), "d.csv", FamilyKind::Poisson, 0.0, 1);
    let out = path(dir.path(), "fit.json");
    let plot = path(dir.path(), "curve.tsv");
    let o = run(&[
        "fit", "--input", csv.to_str().unwrap(), "--family", "poisson", "--alpha", "1", "--lambda", "10", "--knots", "20",
        "--out", &out, "--plot-data", &plot,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let art = read_artifact(&out);
    assert_eq!(art.fit.alpha, 1.0);
    assert_eq!(art.fit.lambda, 10.0);
    assert_eq!(art.fit.coefs.len(), 20 + 4);
    assert_eq!(art.curve.t_unit.len(), 512);
    assert!(art.selection.is_none());
    let tsv = fs::read_to_string(&plot).unwrap();
    let mut lines = tsv.lines();
    assert_eq!(lines.next().unwrap(), "t_original\tt_unit\ttheta_hat\tmu_hat");
    assert_eq!(lines.count(), 512);
}

#[test]
fn auto_alpha_on_contaminated_gaussian() {
    let dir = tempfile::tempdir().unwrap();
    let mut robust = 0;
    for seed in 0..9 {
        let csv = synthetic_n(dir.path(), "g.csv", FamilyKind::Gaussian, 200, 0.1, 40 + seed);
        let out = path(dir.path(), "fit.json");
        let o = run(&["fit", "--input", csv.to_str().unwrap(), "--family", "gaussian", "--out", &out]);
        assert!(o.status.success(), "{}", stderr(&o));
        let art = read_artifact(&out);
        let sel = art.selection.expect("auto alpha records a selection");
        assert_eq!(sel.alpha_hat, art.fit.alpha);
        robust += (sel.alpha_hat >= 0.3) as usize;
    }
    assert!(robust >= 5, "alpha_hat >= 0.3 in {robust}/9 seeds");
}

#[test]
fn missing_column_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "t,z\n0.1,1\n0.2,2\n").unwrap();
    let o = run(&["fit", "--input", csv.to_str().unwrap(), "--family", "gaussian", "--out", &path(dir.path(), "o.json")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing column: y"), "{}", stderr(&o));
}

#[test]
fn non_finite_rows_are_reported_by_number() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("nan.csv");
    let mut s = String::from("t,y\n");
    for i in 1..=30 {
        let y = if i == 17 { "NaN".to_string() } else { format!("{}", i % 4) };
        writeln!(s, "{},{}", i as f64 / 31.0, y).unwrap();
    }
    fs::write(&csv, s).unwrap();
    let o = run(&["fit", "--input", csv.to_str().unwrap(), "--family", "poisson", "--out", &path(dir.path(), "o.json")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 17"), "{}", stderr(&o));
}

#[test]
fn invalid_flags_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synthetic(dir.path(), "d.csv", FamilyKind::Bernoulli, 0.0, 2);
    for extra in [["--alpha", "1.5"], ["--lambda", "-1"], ["--family", "gamma"]] {
        let mut args = vec!["fit", "--input", csv.to_str().unwrap(), "--family", "bernoulli", "--out", "/dev/null"];
        args.extend(extra);
        assert_eq!(run(&args).status.code(), Some(2), "{extra:?}");
    }
    let o = run(&["diagnose", "--fit", csv.to_str().unwrap(), "--out", &path(dir.path(), "r.csv")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn diagnose_cutoffs() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synthetic(dir.path(), "d.csv", FamilyKind::Poisson, 0.0, 3);
    let fit = path(dir.path(), "fit.json");
    let o = run(&["fit", "--input", csv.to_str().unwrap(), "--family", "poisson", "--alpha", "0.5", "--out", &fit]);
    assert!(o.status.success(), "{}", stderr(&o));
    let flagged = |cutoff: &str| {
        let out = path(dir.path(), "r.csv");
        let o = run(&["diagnose", "--fit", &fit, "--cutoff", cutoff, "--out", &out]);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = fs::read_to_string(&out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "index,t,y,mu_hat,residual,flagged");
        let rows: Vec<bool> = lines.map(|l| l.rsplit(',').next().unwrap() == "true").collect();
        assert_eq!(rows.len(), 150);
        rows.iter().filter(|&&f| f).count()
    };
    assert_eq!(flagged("0"), 150);
    assert_eq!(flagged("1e9"), 0);
    assert!(flagged("2.6") < 8, "clean data should rarely be flagged");
}

#[test]
fn bench_is_deterministic_and_notes_eps() {
    let dir = tempfile::tempdir().unwrap();
    let report = |eps: &str, name: &str| {
        let out = path(dir.path(), name);
        let o = run(&["bench", "--family", "gaussian", "--n", "60", "--eps", eps, "--reps", "1", "--seed", "1", "--out", &out, "--table"]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("GAM"));
        let mut r: BenchReport = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        r.wall_time_secs = 0.0;
        r
    };
    let a = serde_json::to_string(&report("0.1", "a.json")).unwrap();
    let b = serde_json::to_string(&report("0.1", "b.json")).unwrap();
    assert_eq!(a, b);
    assert!(report("0.1", "a.json").note.is_none());
    assert!(report("0.3", "c.json").note.is_some());
    let o = run(&["bench", "--family", "gaussian", "--eps", "0.5", "--reps", "1", "--out", &path(dir.path(), "d.json")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn artifact_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synthetic(dir.path(), "d.csv", FamilyKind::Bernoulli, 0.05, 4);
    let out = path(dir.path(), "fit.json");
    let o = run(&["fit", "--input", csv.to_str().unwrap(), "--family", "bernoulli", "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let art = read_artifact(&out);
    let again: FitArtifact = serde_json::from_str(&serde_json::to_string(&art).unwrap()).unwrap();
    assert_eq!(art, again);
    assert_eq!(art.input_checksum.len(), 64);
}

#[test]
fn affine_covariate_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let s = Scenario { family: FamilyKind::Poisson, test_fn: TestFunction::G2, n: 120, eps: 0.05, seed: 8 };
    let d = generate_replicate(&s, 0).unwrap();
    let shifted: Vec<f64> = d.t.iter().map(|&t| 5.0 * t + 2.0).collect();
    let fit = |t: &[f64], name: &str| {
        let csv = dir.path().join(format!("{name}.csv"));
        write_csv(&csv, t, &d.y);
        let out = path(dir.path(), &format!("{name}.json"));
        let o = run(&["fit", "--input", csv.to_str().unwrap(), "--family", "poisson", "--out", &out]);
        assert!(o.status.success(), "{}", stderr(&o));
        read_artifact(&out)
    };
    let (a, b) = (fit(&d.t, "plain"), fit(&shifted, "shifted"));
    assert_eq!(a.fit.alpha, b.fit.alpha);
    assert_eq!(a.fit.lambda, b.fit.lambda);
    for (x, y) in a.fit.mu_hat.iter().zip(&b.fit.mu_hat) {
        assert!((x - y).abs() < 1e-10);
    }
    let mse = |art: &FitArtifact| art.fit.mu_hat.iter().zip(&d.mu).map(|(x, m)| (x - m).powi(2)).sum::<f64>() / 120.0;
    assert!((mse(&a) - mse(&b)).abs() < 1e-10);
    for (x, y) in b.curve.t_original.iter().zip(&a.curve.t_original) {
        assert!((x - (5.0 * y + 2.0)).abs() < 1e-12);
    }
}
