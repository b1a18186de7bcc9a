//! `cm`: center-manifold reduction for nonlocal equations `u + K * u + F(u, mu) = 0`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cm_core::json::to_stable_string;
use cm_core::problem::{self, Problem, Tolerances};
use cm_core::spectrum::SNAP_TOL;
use cm_core::tsolve::DEFAULT_TOL;
use cm_core::verify::write_csv;

#[derive(Parser)]
#[command(name = "cm", version, about = "Center-manifold reduction for nonlocal equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Locate the roots of the symbol on the imaginary axis.
    Spectrum(Common),
    /// Compute the reduced vector field and the Taylor jet of the manifold.
    Reduce(Common),
    /// Shoot the waves of the scaled reduced field and check residuals on a grid.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Directory for one profile CSV per run.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Problem file (JSON, schema 1).
    problem: PathBuf,
    /// Jet order; overrides the problem file.
    #[arg(long)]
    order: Option<usize>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Distance below which roots snap to the imaginary axis.
    #[arg(long, default_value_t = SNAP_TOL)]
    tol_root: f64,
    /// Relative residual accepted from the linear solves.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol_solve: f64,
    /// Seed for randomized diagnostics.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

impl Common {
    fn tolerances(&self) -> Tolerances {
        Tolerances { root: self.tol_root, solve: self.tol_solve, seed: self.seed }
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> cm_core::Result<()> {
    match out {
        Some(p) => Ok(std::fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_runs(dir: &Path, report: &cm_core::verify::WaveReport) -> cm_core::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, run) in report.runs.iter().enumerate() {
        write_csv(&dir.join(format!("run_{i}.csv")), run)?;
    }
    Ok(())
}

/// Returns whether every verification check passed.
fn run(cli: Cli) -> cm_core::Result<bool> {
    match cli.command {
        Command::Spectrum(c) => {
            let p = Problem::load(&c.problem)?;
            let report = problem::spectrum_report(&p, &c.tolerances())?;
            emit(&c.out, &to_stable_string(&report)?)?;
            Ok(true)
        }
        Command::Reduce(c) => {
            let p = Problem::load(&c.problem)?;
            let order = c.order.unwrap_or(p.order);
            let (_, report) = problem::reduce(&p, order, &c.tolerances())?;
            emit(&c.out, &to_stable_string(&report)?)?;
            Ok(true)
        }
        Command::Verify { common: c, csv } => {
            let p = Problem::load(&c.problem)?;
            let order = c.order.unwrap_or(p.order);
            let report = problem::verify(&p, order, &c.tolerances())?;
            emit(&c.out, &to_stable_string(&report)?)?;
            if let Some(dir) = csv {
                write_runs(&dir, &report)?;
            }
            for (name, ok) in &report.checks {
                eprintln!("{} {name}", if *ok { "ok  " } else { "FAIL" });
            }
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input() { 2 } else { 1 })
        }
    }
}

