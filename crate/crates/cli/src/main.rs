//! `qobs`: experiment driver for the qobstacle library.
//!
//! Exit codes: 0 success, 2 invalid input, 3 non-convergence, 4 failed
//! verification, 1 anything else.

// `!(x > 0.0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod output;
mod run;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use qobstacle::analysis;
use qobstacle::exponents::{self, DimensionBound};
use qobstacle::potentials::PotentialSpec;
use qobstacle::solver::{checkpoint, Grid};
use qobstacle::verify;
use serde::Serialize;

use config::{ExperimentConfig, RunKind};
use output::Stamp;

/// Input rejected before any compute.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Parser)]
#[command(name = "qobs", version, about = "Q-tensor obstacle experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment or potential config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; all cores by default. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Exponent table `p(A)`, `s(A)`, `q_max` and dimension bounds as CSV.
    Formulas {
        /// Comma-separated anisotropy values.
        #[arg(long = "a", value_delimiter = ',', allow_hyphen_values = true)]
        a_values: Vec<f64>,
        /// Linearly spaced values `START:STOP:COUNT`.
        #[arg(long, allow_hyphen_values = true)]
        range: Option<String>,
        /// Inverse-power exponent for the dimension bound columns.
        #[arg(long)]
        s: Option<f64>,
    },
    /// Sampled growth, gradient, Hessian and convexity constants of a potential.
    CheckPotential {
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Continuation solve with checkpoint, trace, scaling and summary outputs.
    Minimize,
    /// One run per value of the configured sweep axis.
    Sweep,
    /// Sampled invariant suite; JSON report of every check's worst slack.
    Verify {
        #[arg(long, value_enum, default_value_t = Level::Quick)]
        level: Level,
    },
    /// Synthetic field whose distance to the obstacle is `|x - x0|`, clipped.
    Synth {
        #[arg(long, default_value_t = 48)]
        n: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Quick,
    Full,
}

enum Status {
    Ok,
    NotConverged,
    VerificationFailed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => {
            eprintln!("qobs: did not converge");
            ExitCode::from(3)
        }
        Ok(Status::VerificationFailed) => {
            eprintln!("qobs: verification failed");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("qobs: {e:#}");
            if e.downcast_ref::<Invalid>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<Status> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!(Invalid("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("qobs-out"));
    match cli.command {
        Command::Formulas { a_values, range, s } => {
            formulas(a_values, range.as_deref(), s, cli.out.as_deref())?;
            Ok(Status::Ok)
        }
        Command::CheckPotential { samples } => {
            check_potential(cli.config.as_deref(), samples, cli.seed.unwrap_or(0), cli.out.as_deref())?;
            Ok(Status::Ok)
        }
        Command::Minimize => {
            let cfg = load_config(cli.config.as_deref(), cli.seed)?;
            let stamp = Stamp::of(&cfg);
            let outcome = run::execute(&cfg)?;
            run::write_outputs(&cfg, &outcome, &stamp, &out)?;
            Ok(if outcome.converged() { Status::Ok } else { Status::NotConverged })
        }
        Command::Sweep => {
            let cfg = load_config(cli.config.as_deref(), cli.seed)?;
            if cfg.kind != RunKind::Sweep {
                bail!(Invalid("sweep needs a config with kind = \"sweep\"".into()));
            }
            let converged = run::sweep(&cfg, &Stamp::of(&cfg), &out)?;
            Ok(if converged { Status::Ok } else { Status::NotConverged })
        }
        Command::Verify { level } => {
            let level = match level {
                Level::Quick => verify::Level::Quick,
                Level::Full => verify::Level::Full,
            };
            let seed = cli.seed.unwrap_or(0);
            let checks = verify::suite(level, seed)?;
            let passed = checks.iter().all(|c| c.passed);
            let report =
                serde_json::json!({ "version": output::VERSION, "seed": seed, "passed": passed, "checks": checks });
            emit(&run::pretty(&report)?, cli.out.as_deref(), "verify.json")?;
            Ok(if passed { Status::Ok } else { Status::VerificationFailed })
        }
        Command::Synth { n } => {
            synth(n, &out)?;
            Ok(Status::Ok)
        }
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let path = path.ok_or_else(|| Invalid("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Prints to stdout, and also writes `dir/name` when an output directory is given.
fn emit(text: &str, dir: Option<&Path>, name: &str) -> Result<()> {
    print!("{text}");
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(name), text).with_context(|| format!("writing {name}"))?;
    }
    Ok(())
}

fn parse_range(spec: &str) -> Result<Vec<f64>, Invalid> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Invalid(format!("range must be START:STOP:COUNT, got {spec:?}"));
    let [a, b, n] = parts.as_slice() else { return Err(bad()) };
    let (a, b): (f64, f64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
    let n: usize = n.parse().map_err(|_| bad())?;
    Ok(match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    })
}

fn bound_cell(b: qobstacle::Result<DimensionBound>) -> String {
    match b {
        Ok(DimensionBound::Empty) => "empty".into(),
        Ok(DimensionBound::Bound(v)) => format!("{v}"),
        Err(_) => String::new(),
    }
}

fn formulas(mut values: Vec<f64>, range: Option<&str>, s: Option<f64>, out: Option<&Path>) -> Result<()> {
    if let Some(r) = range {
        values.extend(parse_range(r)?);
    }
    if values.is_empty() {
        bail!(Invalid("give --a or --range".into()));
    }
    let stamp = Stamp::of(&(&values, s));
    let mut csv = stamp.csv_comment();
    csv.push_str("A,p,s_of_a,q_max,branch");
    if s.is_some() {
        csv.push_str(",dim_basic,dim_improved");
    }
    csv.push('\n');
    for a in values {
        let t = exponents::p_of_a(a).map_err(|e| Invalid(format!("A = {a}: {e}")))?;
        write!(csv, "{a},{},{},{},{}", t.p, t.s, t.q_max, t.branch.label())?;
        if let Some(s) = s {
            write!(
                csv,
                ",{},{}",
                bound_cell(exponents::dim_bound_basic(s, a)),
                bound_cell(exponents::dim_bound_improved_power(s, a))
            )?;
        }
        csv.push('\n');
    }
    emit(&csv, out, "formulas.csv")
}

#[derive(Serialize)]
struct PotentialReport {
    #[serde(flatten)]
    stamp: Stamp,
    spec: PotentialSpec,
    growth: qobstacle::potentials::HypothesisReport,
    gradient: qobstacle::potentials::HypothesisReport,
    hessian: qobstacle::potentials::HypothesisReport,
    convexity: qobstacle::potentials::MidpointReport,
}

fn check_potential(path: Option<&Path>, samples: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let path = path.ok_or_else(|| Invalid("--config is required".into()))?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let spec: PotentialSpec = serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
    spec.validate().map_err(|e| Invalid(e.to_string()))?;
    let pot = spec.compile()?;
    let report = PotentialReport {
        stamp: Stamp::of(&(&spec, samples, seed)),
        growth: pot.check_growth(samples, seed)?,
        gradient: pot.check_gradient_bound(samples, seed + 1)?,
        hessian: pot.check_hessian_bound(samples, seed + 2)?,
        convexity: pot.convexity_midpoint_check(samples, seed + 3)?,
        spec,
    };
    emit(&run::pretty(&report)?, out, "check_potential.json")
}

fn synth(n: usize, dir: &Path) -> Result<()> {
    let grid = Grid::new(n).map_err(|e| Invalid(e.to_string()))?;
    let center = analysis::synthetic_center(grid);
    let field = analysis::synthetic_radial_field(grid, center);
    let levels = verify::scaling_levels();
    let report = analysis::scaling_fit(&field, &levels, 0.0, None)?;
    let stamp = Stamp::of(&("synth_radial", n));
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("field.qobs"), checkpoint::to_bytes(&field))?;
    let mut csv = stamp.csv_comment();
    csv.push_str(&report.to_csv());
    std::fs::write(dir.join("scaling.csv"), csv)?;
    let summary = serde_json::json!({
        "version": stamp.version,
        "config_hash": stamp.config_hash,
        "n": n,
        "center": center,
        "scaling": report,
    });
    std::fs::write(dir.join("summary.json"), run::pretty(&summary)?)?;
    Ok(())
}
