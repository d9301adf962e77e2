//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p qobstacle-cli --test acceptance`.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use qobstacle::exec::Exec;
use qobstacle::retract::{self, RetractionSpec};
use qobstacle::solver::{self, checkpoint, Functional, Grid};
use qobstacle::verify::{self, Check};
use serde_json::Value;

const SEED: u64 = 20_240_601;

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn qobs(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_qobs")).args(args).output().expect("qobs runs")
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn from_checks(checks: &[Check]) -> Outcome {
    let detail = checks
        .iter()
        .map(|c| format!("{}={:.3e}{}", c.name, c.worst, if c.passed { "" } else { " FAIL" }))
        .collect::<Vec<_>>()
        .join(", ");
    Outcome { passed: checks.iter().all(|c| c.passed), detail }
}

fn within(outcome: Outcome, elapsed: Duration, budget: Duration) -> Outcome {
    let ok = elapsed <= budget;
    Outcome {
        passed: outcome.passed && ok,
        detail: format!(
            "{}, {:.1}s of {}s{}",
            outcome.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if ok { "" } else { " FAIL" }
        ),
    }
}

fn timed(budget_secs: u64, f: impl FnOnce() -> Outcome) -> Outcome {
    let t = Instant::now();
    let o = f();
    within(o, t.elapsed(), Duration::from_secs(budget_secs))
}

fn distance() -> Outcome {
    timed(60, || from_checks(&verify::distance(10_000, 10_000, 20, SEED).unwrap()))
}

fn inequalities() -> Outcome {
    timed(30, || from_checks(&verify::inequalities(1_000_000, SEED + 1).unwrap()))
}

fn exponents() -> Outcome {
    timed(10, || from_checks(&verify::exponents(200, 100_000).unwrap()))
}

fn regularization() -> Outcome {
    from_checks(&verify::regularization(1_000, 10_000, SEED + 2).unwrap())
}

fn gradients() -> Outcome {
    from_checks(&verify::gradients(20, 8, SEED + 3).unwrap())
}

fn retractions() -> Outcome {
    from_checks(&verify::retractions(100_000, SEED + 4).unwrap())
}

fn scaling() -> Outcome {
    from_checks(&verify::scaling(48).unwrap())
}

/// Runs the bundled twist config once; criteria 6 and 9 share the result.
fn twist_run(dir: &Path) -> (Duration, Value) {
    let config = repo_path("configs/a0_twist.json");
    let t = Instant::now();
    let out = qobs(&["minimize", "--config", config.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    let elapsed = t.elapsed();
    assert!(out.status.success(), "twist run failed: {}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.join("summary.json")).unwrap();
    (elapsed, serde_json::from_str(&summary).unwrap())
}

fn emptiness(elapsed: Duration, summary: &Value) -> Outcome {
    let d = summary["min_distance"]["distance"].as_f64().unwrap();
    let converged = summary["converged"].as_bool().unwrap();
    within(
        Outcome {
            passed: converged && d >= 0.02,
            detail: format!("converged={converged}, min_distance={d:.4} (pinned ≥ 0.02)"),
        },
        elapsed,
        Duration::from_secs(600),
    )
}

/// Reported levels from the run, plus a level above the minimum distance so
/// the retraction actually moves nodes.
fn minimality(dir: &Path, summary: &Value) -> Outcome {
    let mut worst = f64::INFINITY;
    let mut parts = Vec::new();
    for m in summary["minimality"].as_array().unwrap() {
        let slack = m["slack"].as_f64().unwrap();
        worst = worst.min(slack);
        parts.push(format!("a={}: {slack:.2e}", m["a"]));
    }
    let reported = summary["minimality"].as_array().unwrap().len();

    let cfg: Value =
        serde_json::from_str(&std::fs::read_to_string(repo_path("configs/a0_twist.json")).unwrap()).unwrap();
    let solver_cfg: solver::SolverConfig = serde_json::from_value(cfg["solver"].clone()).unwrap();
    let boundary: solver::BoundaryData = serde_json::from_value(cfg["boundary"].clone()).unwrap();
    let template = solver::make_boundary(&boundary, Grid::new(cfg["n"].as_u64().unwrap() as usize).unwrap()).unwrap();
    let field = checkpoint::read_into(std::fs::File::open(dir.join("field.qobs")).unwrap(), &template).unwrap();
    let eps = solver_cfg.epsilon_schedule.last().copied();
    let functional = Functional::new(&solver_cfg, eps, Exec::Parallel).unwrap();
    let e = functional.energy(&field).unwrap().total;
    let a = 0.3;
    let r = RetractionSpec::Distance { a }.build().unwrap();
    let comp = retract::comparison_field(&field, &r, 0.2, 0.1).unwrap();
    let moved = comp.values.iter().zip(&field.values).filter(|(p, q)| p != q).count();
    let slack = functional.energy(&comp).unwrap().total - e;
    worst = worst.min(slack);
    parts.push(format!("a={a}: {slack:.2e} ({moved} nodes moved)"));
    Outcome { passed: reported == 2 && worst >= -1e-9, detail: parts.join(", ") }
}

fn determinism(scratch: &Path) -> Outcome {
    let base: Value =
        serde_json::from_str(&std::fs::read_to_string(repo_path("configs/supercritical.json")).unwrap()).unwrap();
    let mut cfg = base;
    cfg["perturbation"] = serde_json::json!(0.02);
    let config = scratch.join("determinism.json");
    std::fs::write(&config, serde_json::to_string(&cfg).unwrap()).unwrap();
    let runs: Vec<PathBuf> = [("1", "a"), ("4", "b"), ("4", "c")]
        .iter()
        .map(|(threads, name)| {
            let dir = scratch.join(name);
            let out = qobs(&[
                "minimize",
                "--config",
                config.to_str().unwrap(),
                "--out",
                dir.to_str().unwrap(),
                "--threads",
                threads,
                "--seed",
                "5",
            ]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            dir
        })
        .collect();
    let files = ["field.qobs", "trace.csv", "scaling.csv", "summary.json", "field.json"];
    let mut same = true;
    for f in files {
        let first = std::fs::read(runs[0].join(f)).unwrap();
        same &= runs[1..].iter().all(|r| std::fs::read(r.join(f)).unwrap() == first);
    }
    Outcome { passed: same, detail: format!("{} files identical across threads 1/4/4: {same}", files.len()) }
}

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let twist_dir = scratch.path().join("twist");
    let mut failed = 0;
    let mut report = |name: &str, o: Outcome| {
        println!("[{}] {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    };
    report("1 distance oracle", distance());
    report("2 algebraic inequalities", inequalities());
    report("3 exponent formula", exponents());
    report("4 regularization", regularization());
    report("5 discrete gradient", gradients());
    let (elapsed, summary) = twist_run(&twist_dir);
    report("6 emptiness at A = 0", emptiness(elapsed, &summary));
    report("7 retractions", retractions());
    report("8 synthetic scaling", scaling());
    report("9 minimality", minimality(&twist_dir, &summary));
    report("10 determinism", determinism(scratch.path()));
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
