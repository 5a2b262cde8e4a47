use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod io;

#[derive(Parser)]
#[command(name = "dpdspline", version, about = "Robust penalized spline GLM fits by density power divergence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a CSV with columns t,y and write a JSON artifact.
    Fit(FitArgs),
    /// Anscombe residuals and outlier flags for a fitted artifact.
    Diagnose(DiagnoseArgs),
    /// Monte Carlo comparison of DPD(a^), DPD(1) and GAM.
    Bench(BenchArgs),
}

#[derive(clap::Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub family: String,
    /// `auto` or a value in [0, 1].
    #[arg(long, default_value = "auto")]
    pub alpha: String,
    /// `auto` or a positive value.
    #[arg(long, default_value = "auto")]
    pub lambda: String,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    /// Spline order; defaults to 2m.
    #[arg(long)]
    pub p: Option<usize>,
    /// `auto` or a number of interior knots.
    #[arg(long, default_value = "auto")]
    pub knots: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional TSV of the fitted curve.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long, default_value_t = 2.6)]
    pub cutoff: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(clap::Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub family: String,
    #[arg(long, default_value = "g1")]
    pub testfn: String,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also print an aligned text table.
    #[arg(long)]
    pub table: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => commands::fit(&a),
        Command::Diagnose(a) => commands::diagnose(&a),
        Command::Bench(a) => commands::bench(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
