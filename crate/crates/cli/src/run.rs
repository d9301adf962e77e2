//! `minimize` and `sweep`.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;
use qobstacle::analysis::{self, MinDistance, ScalingReport, Theory};
use qobstacle::exec::Exec;
use qobstacle::potentials::Family;
use qobstacle::retract::{self, RetractionSpec};
use qobstacle::solver::{self, checkpoint, ContinuationReport, EnergyParts, Functional, Increment, QField};
use qobstacle::{exponents, sampling};
use serde::Serialize;

use crate::config::{ExperimentConfig, SweepAxis};
use crate::output::Stamp;

#[derive(Serialize)]
struct StageSummary {
    epsilon: Option<f64>,
    iterations: usize,
    converged: bool,
    residual: f64,
    energy: EnergyParts,
    retractions: usize,
    degenerate_cells: usize,
}

#[derive(Serialize)]
struct Minimality {
    a: f64,
    converged_energy: f64,
    comparison_energy: f64,
    slack: f64,
}

#[derive(Serialize)]
struct ExponentSummary {
    #[serde(rename = "A")]
    a: f64,
    p: f64,
    s_of_a: f64,
    q_max: f64,
    branch: &'static str,
}

#[derive(Serialize)]
struct Summary<'a> {
    #[serde(flatten)]
    stamp: &'a Stamp,
    converged: bool,
    energy: EnergyParts,
    stages: Vec<StageSummary>,
    increments: &'a [Increment],
    min_distance: MinDistance,
    scaling: &'a ScalingReport,
    exponents: Option<ExponentSummary>,
    minimality: Vec<Minimality>,
}

/// Result of one experiment, kept in memory for sweeps.
pub struct Outcome {
    pub report: ContinuationReport,
    pub min_distance: MinDistance,
    pub scaling: ScalingReport,
    pub minimality: Vec<(f64, f64, f64)>,
}

impl Outcome {
    pub fn converged(&self) -> bool {
        self.report.converged()
    }
}

fn initial_field(cfg: &ExperimentConfig) -> Result<QField> {
    let grid = solver::Grid::new(cfg.n)?;
    let field = solver::make_boundary(&cfg.boundary, grid)?;
    if cfg.perturbation == 0.0 {
        return Ok(field);
    }
    let mut rng = sampling::rng(cfg.seed);
    let interior: Vec<_> = field
        .interior()
        .iter()
        .map(|q| {
            retract::h_a(&(*q + sampling::random_tensor(&mut rng) * cfg.perturbation), solver::field::BOUNDARY_MARGIN)
        })
        .collect::<Result<_, _>>()?;
    let mut out = field;
    out.set_interior(&interior);
    Ok(out)
}

fn power_exponent(cfg: &ExperimentConfig) -> Option<f64> {
    match cfg.solver.potential.as_ref().map(|p| &p.family) {
        Some(Family::InversePower { s, .. }) => Some(*s),
        _ => None,
    }
}

pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    let field0 = initial_field(cfg)?;
    let report = solver::epsilon_continuation(&field0, &cfg.solver, Exec::Parallel)?;
    let last = report.last();
    let margin = cfg.analysis.margin;
    let min_distance = analysis::min_distance(&last.field, margin)?;
    let theory = match power_exponent(cfg) {
        Some(s) if cfg.solver.elastic.is_none() => Some(Theory::new(s, cfg.solver.a)?),
        _ => None,
    };
    let levels = cfg.analysis.levels.clone().unwrap_or_else(analysis::default_levels);
    let scaling = analysis::scaling_fit(&last.field, &levels, margin, theory)?;

    let mut minimality = Vec::new();
    if report.converged() {
        let eps = report.stages.last().and_then(|s| s.epsilon);
        let functional = Functional::new(&cfg.solver, eps, Exec::Parallel)?;
        for &a in &cfg.analysis.comparison_levels {
            let r = RetractionSpec::Distance { a }.build()?;
            let comp =
                retract::comparison_field(&last.field, &r, cfg.analysis.cutoff_inner, cfg.analysis.cutoff_outer)?;
            minimality.push((a, last.energy.total, functional.energy(&comp)?.total));
        }
    }
    Ok(Outcome { report, min_distance, scaling, minimality })
}

pub fn write_outputs(cfg: &ExperimentConfig, outcome: &Outcome, stamp: &Stamp, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let report = &outcome.report;
    let last = report.last();

    std::fs::write(dir.join("field.qobs"), checkpoint::to_bytes(&last.field))?;
    let sidecar = serde_json::json!({
        "version": stamp.version,
        "config_hash": stamp.config_hash,
        "format": "QOBS",
        "format_version": checkpoint::VERSION,
        "n": last.field.grid.n,
        "layout": "interior nodes (i, j, k) row-major, 5 little-endian f64 coefficients each",
    });
    std::fs::write(dir.join("field.json"), pretty(&sidecar)?)?;

    let mut trace = stamp.csv_comment();
    trace.push_str("stage,epsilon,iter,total,elastic,bulk,grad_norm\n");
    for (k, stage) in report.stages.iter().enumerate() {
        let eps = stage.epsilon.map(|e| format!("{e:e}")).unwrap_or_default();
        for r in &stage.result.trace {
            writeln!(trace, "{k},{eps},{},{:e},{:e},{:e},{:e}", r.iter, r.total, r.elastic, r.bulk, r.grad_norm)?;
        }
    }
    std::fs::write(dir.join("trace.csv"), trace)?;

    let mut scaling = stamp.csv_comment();
    scaling.push_str(&outcome.scaling.to_csv());
    std::fs::write(dir.join("scaling.csv"), scaling)?;

    let a = cfg.solver.a;
    let exponents = match (cfg.solver.elastic, exponents::p_of_a(a)) {
        (None, Ok(t)) => Some(ExponentSummary { a, p: t.p, s_of_a: t.s, q_max: t.q_max, branch: t.branch.label() }),
        _ => None,
    };
    let summary = Summary {
        stamp,
        converged: outcome.converged(),
        energy: last.energy,
        stages: report
            .stages
            .iter()
            .map(|s| StageSummary {
                epsilon: s.epsilon,
                iterations: s.result.iterations,
                converged: s.result.converged,
                residual: s.result.residual,
                energy: s.result.energy,
                retractions: s.result.retractions,
                degenerate_cells: s.result.degenerate_cells,
            })
            .collect(),
        increments: &report.increments,
        min_distance: outcome.min_distance,
        scaling: &outcome.scaling,
        exponents,
        minimality: outcome
            .minimality
            .iter()
            .map(|&(a, e, c)| Minimality { a, converged_energy: e, comparison_energy: c, slack: c - e })
            .collect(),
    };
    std::fs::write(dir.join("summary.json"), pretty(&summary)?)?;
    Ok(())
}

pub fn pretty<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// Runs every sweep point, writing one long-format CSV row per run (one row
/// per stage for an ε-sweep). Returns whether every run converged.
pub fn sweep(cfg: &ExperimentConfig, stamp: &Stamp, dir: &Path) -> Result<bool> {
    let sweep = cfg.sweep.as_ref().expect("validated");
    let mut csv = stamp.csv_comment();
    csv.push_str("axis,value,converged,energy,min_distance,beta,iterations,increment_l2\n");
    let axis = match sweep.axis {
        SweepAxis::A => "A",
        SweepAxis::S => "s",
        SweepAxis::Epsilon => "epsilon",
    };
    let fmt_beta = |r: &ScalingReport| r.beta.map(|b| format!("{b:e}")).unwrap_or_default();
    let mut all = true;
    if sweep.axis == SweepAxis::Epsilon {
        let run = cfg.with_sweep_value(sweep.axis, f64::NAN)?;
        let outcome = execute(&run)?;
        all &= outcome.converged();
        for (k, stage) in outcome.report.stages.iter().enumerate() {
            let r = &stage.result;
            let md = analysis::min_distance(&r.field, cfg.analysis.margin)?;
            let increment = if k == 0 { String::new() } else { format!("{:e}", outcome.report.increments[k - 1].l2) };
            let beta = if k + 1 == outcome.report.stages.len() { fmt_beta(&outcome.scaling) } else { String::new() };
            writeln!(
                csv,
                "{axis},{:e},{},{:e},{:e},{beta},{},{increment}",
                stage.epsilon.unwrap_or(0.0),
                r.converged,
                r.energy.total,
                md.distance,
                r.iterations
            )?;
        }
    } else {
        for &v in &sweep.values {
            let outcome = execute(&cfg.with_sweep_value(sweep.axis, v)?)?;
            all &= outcome.converged();
            let iterations: usize = outcome.report.stages.iter().map(|s| s.result.iterations).sum();
            writeln!(
                csv,
                "{axis},{v:e},{},{:e},{:e},{},{iterations},",
                outcome.converged(),
                outcome.report.last().energy.total,
                outcome.min_distance.distance,
                fmt_beta(&outcome.scaling)
            )?;
        }
    }
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("sweep.csv"), csv)?;
    Ok(all)
}
