//! `reclab`: run one experiment from a JSON config.
//!
//! Exit codes: 0 when every tolerance is met, 2 when some metric misses its
//! tolerance, 1 on any error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use reclab_core::{run_with_jobs, ExperimentConfig, ExperimentKind, RunReport, Tolerance};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "reclab", version, about = "Recurrence and shrinking-target experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Self-normed recurrence sums against their Gaussian limit
    CltRecurrence(RunArgs),
    /// Shrinking-target sums around one center against a standard Gaussian
    CltTarget(RunArgs),
    /// Variance against summed ball masses, and the target variance integral
    VarianceReport(RunArgs),
    /// Short-return probabilities and ball overlaps
    ShortReturns(RunArgs),
    /// Hit counts in balls of radius tau/(2n) against the averaged Poisson law
    PoissonCount(RunArgs),
    /// Ulam operator spectrum, stationary density and martingale residuals
    TransferDiagnostics(RunArgs),
    /// Future-only observables and telescoping residuals on a shift
    SinaiCheck(RunArgs),
    /// Hit counts over summed ball volumes against the density
    SbcRatio(RunArgs),
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::CltRecurrence(a) => (ExperimentKind::CltRecurrence, a),
            Command::CltTarget(a) => (ExperimentKind::CltTarget, a),
            Command::VarianceReport(a) => (ExperimentKind::VarianceReport, a),
            Command::ShortReturns(a) => (ExperimentKind::ShortReturns, a),
            Command::PoissonCount(a) => (ExperimentKind::PoissonCount, a),
            Command::TransferDiagnostics(a) => (ExperimentKind::TransferDiagnostics, a),
            Command::SinaiCheck(a) => (ExperimentKind::SinaiCheck, a),
            Command::SbcRatio(a) => (ExperimentKind::SbcRatio, a),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; the report goes to stdout when neither this nor the config sets one
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed, overriding the config
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long, value_name = "N", env = "RECLAB_JOBS")]
    jobs: Option<usize>,
    /// Also write plot.py next to the CSV series
    #[arg(long)]
    plot_script: bool,
}

fn load(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut value: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    let Some(obj) = value.as_object_mut() else {
        bail!("{}: expected a JSON object", args.config.display());
    };
    match obj.get("kind").and_then(Value::as_str) {
        Some(k) if k != kind.name() => bail!("config is for {k}, not {kind}"),
        Some(_) => {}
        None => {
            obj.insert("kind".into(), kind.name().into());
        }
    }
    if let Some(seed) = args.seed {
        obj.insert("seed".into(), seed.into());
    }
    let mut config = ExperimentConfig::from_value(&value)?;
    if let Some(dir) = &args.out {
        config.outputs.dir = Some(dir.clone());
    }
    config.outputs.plot_script |= args.plot_script;
    Ok(config)
}

fn num(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-3 {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn describe(t: &Tolerance) -> String {
    match *t {
        Tolerance::AtMost { bound } => format!("<= {}", num(bound)),
        Tolerance::AtLeast { bound } => format!(">= {}", num(bound)),
        Tolerance::Within { reference, bound } => format!("{} ± {}", num(reference), num(bound)),
        Tolerance::WithinSe { reference, sigmas } => format!("{} ± {sigmas} SE", num(reference)),
    }
}

fn summarize(report: &RunReport) {
    for m in &report.metrics {
        eprintln!(
            "{} {}: {:.6e} (se {:.2e}, want {})",
            if m.pass { "PASS" } else { "FAIL" },
            m.name,
            m.value,
            m.se,
            describe(&m.tolerance)
        );
    }
    eprintln!("wall time {:.2}s", report.wall_time.as_secs_f64());
}

fn run(cli: Cli) -> Result<bool> {
    let (kind, args) = cli.command.split();
    let config = load(kind, &args)?;
    let report = run_with_jobs(&config, args.jobs)?;
    summarize(&report);
    match &config.outputs.dir {
        Some(dir) => {
            for path in report.write_outputs(dir, config.outputs.plot_script)? {
                eprintln!("wrote {}", path.display());
            }
        }
        None => print!("{}", report.to_json()?),
    }
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
