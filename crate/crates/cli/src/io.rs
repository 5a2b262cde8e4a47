use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use dpd_spline::diagnostics::ResidualReport;
use dpd_spline::pipeline::{Dataset, FitArtifact};
use sha2::{Digest, Sha256};

/// Reads a headed CSV with numeric columns `t` and `y`. Returns the dataset and
/// the SHA-256 of the file contents.
pub fn read_dataset(path: &Path) -> Result<(Dataset, String)> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let checksum = hex::encode(Sha256::digest(&bytes));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
    let headers = reader.headers().context("cannot read CSV header")?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| anyhow!("missing column: {name}"));
    let (ti, yi) = (column("t")?, column("y")?);
    let (mut t, mut y) = (Vec::new(), Vec::new());
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record.with_context(|| format!("row {row}: malformed record"))?;
        let field = |idx: usize, name: &str| -> Result<f64> {
            let raw = record.get(idx).ok_or_else(|| anyhow!("row {row}: missing value for {name}"))?;
            let v: f64 = raw.parse().map_err(|_| anyhow!("row {row}: {name} value '{raw}' is not a number"))?;
            if !v.is_finite() {
                bail!("row {row}: {name} value '{raw}' is not finite");
            }
            Ok(v)
        };
        t.push(field(ti, "t")?);
        y.push(field(yi, "y")?);
    }
    if t.is_empty() {
        bail!("no data rows");
    }
    Ok((Dataset::new(t, y)?, checksum))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_artifact(path: &Path) -> Result<FitArtifact> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not a fit artifact", path.display()))
}

pub fn write_plot_data(path: &Path, art: &FitArtifact) -> Result<()> {
    let mut out = String::from("t_original\tt_unit\ttheta_hat\tmu_hat\n");
    let c = &art.curve;
    for k in 0..c.t_unit.len() {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", c.t_original[k], c.t_unit[k], c.theta[k], c.mu[k]));
    }
    fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_residuals(path: &Path, art: &FitArtifact, report: &ResidualReport) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["index", "t", "y", "mu_hat", "residual", "flagged"])?;
    let d = &art.dataset;
    for i in 0..d.n() {
        w.write_record([
            (i + 1).to_string(),
            d.t_original[i].to_string(),
            d.y[i].to_string(),
            art.fit.mu_hat[i].to_string(),
            report.residuals[i].to_string(),
            report.flags[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn print(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
}
