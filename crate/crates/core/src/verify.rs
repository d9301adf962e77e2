//! Sampled invariant checks shared by `qobs verify` and the acceptance suite.
//!
//! Every check reports a signed slack: non-negative means the invariant held
//! on every sample, and the value is the margin left at the worst sample.

use rand::Rng;
use serde::Serialize;

use crate::exec::Exec;
use crate::exponents;
use crate::potentials::PotentialSpec;
use crate::qtensor::{self, QTensor};
use crate::regularize::{Method, RegularizedPotential};
use crate::retract::{self, LogJoin};
use crate::sampling;
use crate::solver::{Functional, Grid, QField, SolverConfig};
use crate::{analysis, Result};

const SQRT6: f64 = 2.449_489_742_783_178;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub samples: usize,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub limit: f64,
    /// Distance to failure at the worst sample.
    pub slack: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `worst ≤ limit`.
    fn at_most(name: &str, samples: usize, worst: f64, limit: f64) -> Self {
        let slack = limit - worst;
        Check { name: name.into(), samples, worst, limit, slack, passed: slack >= 0.0 }
    }

    /// Passes when `worst ≥ limit`.
    fn at_least(name: &str, samples: usize, worst: f64, limit: f64) -> Self {
        let slack = worst - limit;
        Check { name: name.into(), samples, worst, limit, slack, passed: slack >= 0.0 }
    }
}

/// Closed-form distance against the rotation search, plus the nearest point.
pub fn distance(samples: usize, brute_samples: usize, restarts: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = sampling::rng(seed);
    let mut brute = 0.0_f64;
    for i in 0..brute_samples {
        let q = sampling::random_interior(&mut rng);
        let d = qtensor::distance(&q)?;
        let b = qtensor::brute_force_distance(&q, restarts, seed ^ (i as u64 + 1))?;
        brute = brute.max((d - b).abs());
    }
    let (mut on_boundary, mut realizes) = (0.0_f64, 0.0_f64);
    for _ in 0..samples {
        let q = sampling::random_interior(&mut rng);
        let d = qtensor::distance(&q)?;
        let p = qtensor::nearest_obstacle_point(&q)?;
        let lambda1 = qtensor::eigen(&p)?.min();
        on_boundary = on_boundary.max((lambda1 + 1.0 / 3.0).abs());
        realizes = realizes.max(((q - p).norm() - d).abs());
    }
    Ok(vec![
        Check::at_most("distance_matches_rotation_search", brute_samples, brute, 1e-6),
        Check::at_most("nearest_point_on_boundary", samples, on_boundary, 1e-10),
        Check::at_most("nearest_point_realizes_distance", samples, realizes, 1e-12),
    ])
}

/// The two algebraic inequalities, with their equality configurations.
pub fn inequalities(samples: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = sampling::rng(seed);
    let (mut norm2, mut div) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..samples {
        norm2 = norm2.min(qtensor::norm2_slack(&sampling::random_tensor(&mut rng)));
        let (m, n, p) =
            (sampling::random_tensor(&mut rng), sampling::random_tensor(&mut rng), sampling::random_tensor(&mut rng));
        div = div.min(qtensor::div_slack(&m, &n, &p));
    }
    let equality_samples = (samples / 10).max(10);
    let (mut norm2_eq, mut div_eq) = (0.0_f64, 0.0_f64);
    for _ in 0..equality_samples {
        let s: f64 = rng.gen_range(-1.0..1.0);
        let q = QTensor::uniaxial(s, &sampling::random_unit(&mut rng));
        norm2_eq = norm2_eq.max(qtensor::norm2_slack(&q).abs());
        let [m, n, p] = div_equality(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        div_eq = div_eq.max(qtensor::div_slack(&m, &n, &p).abs());
    }
    Ok(vec![
        Check::at_least("norm2_slack_nonnegative", samples, norm2, -1e-12),
        Check::at_least("div_slack_nonnegative", samples, div, -1e-12),
        Check::at_most("norm2_equality", equality_samples, norm2_eq, 1e-12),
        Check::at_most("div_equality", equality_samples, div_eq, 1e-12),
    ])
}

/// Triples `(M, N, P)` with `M₁₁ = m`, `N₂₂ = n`, `P₃₃ = p` attaining
/// equality in the divergence inequality.
pub fn div_equality(m: f64, n: f64, p: f64) -> [QTensor; 3] {
    let t = 0.75;
    let mat = |a: [[f64; 3]; 3]| QTensor::from_matrix(&a);
    [
        mat([[m, t * n, t * p], [t * n, -m / 2.0, 0.0], [t * p, 0.0, -m / 2.0]]),
        mat([[-n / 2.0, t * m, 0.0], [t * m, n, t * p], [0.0, t * p, -n / 2.0]]),
        mat([[-p / 2.0, 0.0, t * m], [0.0, -p / 2.0, t * n], [t * m, t * n, p]]),
    ]
}

/// `p(A)` against the direct sup over `ω`, continuity at the breakpoints and
/// monotonicity for `A > 0`.
pub fn exponents(count: usize, oracle_grid: usize) -> Result<Vec<Check>> {
    let shift = -exponents::A_MIN;
    let (lo, hi) = (0.01_f64.ln(), (50.0 + shift).ln());
    let values: Vec<f64> = (0..count)
        .map(|i| (lo + (hi - lo) * i as f64 / (count - 1).max(1) as f64).exp() - shift)
        .filter(|a| *a != 0.0)
        .collect();
    let mut oracle = 0.0_f64;
    let mut positive = Vec::new();
    for &a in &values {
        let p = exponents::p_of_a(a)?.p;
        let o = exponents::p_sup_oracle(a, oracle_grid)?;
        oracle = oracle.max((p - o).abs());
        if a > 0.0 {
            positive.push(p);
        }
    }
    let mut jump = 0.0_f64;
    for b in [exponents::first_breakpoint(), exponents::second_breakpoint()] {
        let delta = 1e-13 * b;
        jump = jump.max((exponents::p_of_a(b - delta)?.p - exponents::p_of_a(b + delta)?.p).abs());
    }
    let worst_step = positive.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    Ok(vec![
        Check::at_most("p_matches_sup_over_omega", values.len(), oracle, 1e-8),
        Check::at_most("p_continuous_at_breakpoints", 2, jump, 1e-10),
        Check::at_most("p_decreasing_for_positive_a", positive.len(), worst_step, 0.0),
    ])
}

fn sandwich_families() -> Vec<PotentialSpec> {
    vec![PotentialSpec::inverse_power(1.0, 1.0), PotentialSpec::logarithmic(1.0, 0.0)]
}

/// Sandwich, convexity and convergence of the regularized potentials.
///
/// The sandwich `f - 2ε ≤ f^ε ≤ f` is checked for the tangent construction on
/// points inside the `1/ε` sublevel set. Convexity and the ε-sweep cover both
/// constructions.
pub fn regularization(points: usize, pairs: usize, seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut rng = sampling::rng(seed);
    let mut sandwich = f64::INFINITY;
    let mut sandwich_samples = 0;
    for spec in sandwich_families() {
        let base = spec.compile()?;
        for eps in [1e-1, 1e-2] {
            let r = RegularizedPotential::new(&base, eps, Method::Tangent)?;
            let d_eps = r.sublevel_threshold();
            for _ in 0..points {
                let d = sampling::log_uniform_distance(&mut rng, d_eps);
                let q = sampling::interior_at_distance(&mut rng, d);
                let f = base.value(&q)?;
                if f > 1.0 / eps {
                    continue;
                }
                let v = r.value_eps(&q)?;
                sandwich = sandwich.min((v - (f - 2.0 * eps - 1e-6)).min(f - v));
                sandwich_samples += 1;
            }
        }
    }
    out.push(Check::at_least("tangent_sandwich", sandwich_samples, sandwich, 0.0));

    let mut convexity = f64::INFINITY;
    let mut convexity_samples = 0;
    let mut decreasing = f64::NEG_INFINITY;
    let sweep = [1e-1, 1e-2, 1e-3, 1e-4];
    let compact: Vec<QTensor> = (0..points)
        .map(|_| {
            let d = rng.gen_range(0.1..SQRT6 / 6.0);
            sampling::interior_at_distance(&mut rng, d)
        })
        .collect();
    for method in [Method::Tangent, Method::Moreau] {
        for spec in sandwich_families() {
            let base = spec.compile()?;
            let r = RegularizedPotential::new(&base, 1e-2, method)?;
            let per_family = pairs / 4;
            for _ in 0..per_family {
                let a = ball_point(&mut rng);
                let b = ball_point(&mut rng);
                let mid = r.value_eps(&((a + b) * 0.5))?;
                let slack = 0.5 * (r.value_eps(&a)? + r.value_eps(&b)?) - mid;
                convexity = convexity.min(slack);
            }
            convexity_samples += per_family;
            let mut errors = Vec::with_capacity(sweep.len());
            for eps in sweep {
                let r = RegularizedPotential::new(&base, eps, method)?;
                let mut sup = 0.0_f64;
                for q in &compact {
                    sup = sup.max((r.value_eps(q)? - base.value(q)?).abs());
                }
                errors.push(sup);
            }
            for w in errors.windows(2) {
                decreasing = decreasing.max(w[1] - w[0]);
            }
        }
    }
    out.push(Check::at_least("regularized_midpoint_convexity", convexity_samples, convexity, -1e-8));
    out.push(Check::at_most("sup_error_decreases_in_epsilon", 4 * sweep.len(), decreasing, -f64::MIN_POSITIVE));
    Ok(out)
}

/// Uniform point of the unit ball in the five-dimensional tensor space.
fn ball_point<R: Rng>(rng: &mut R) -> QTensor {
    let g = sampling::random_tensor(rng);
    let r = rng.gen::<f64>().powf(0.2);
    g * (r / g.norm())
}

/// Directional finite differences of the discrete energy on random fields.
pub fn gradients(fields: usize, n: usize, seed: u64) -> Result<Vec<Check>> {
    let grid = Grid::new(n)?;
    let mut worst = 0.0_f64;
    let mut count = 0;
    for a in [0.0, 0.5] {
        for barrier in [false, true] {
            let mut cfg = SolverConfig::new(a);
            let eps = if barrier {
                cfg.potential = Some(PotentialSpec::ball_majumdar());
                Some(0.1)
            } else {
                None
            };
            let functional = Functional::new(&cfg, eps, Exec::Parallel)?;
            for k in 0..fields {
                let s = seed.wrapping_add(1000 * count as u64 + k as u64);
                worst = worst.max(directional_error(&functional, grid, s)?);
            }
            count += 1;
        }
    }
    Ok(vec![Check::at_most("energy_gradient_finite_difference", count * fields, worst, 1e-6)])
}

fn directional_error(functional: &Functional, grid: Grid, seed: u64) -> Result<f64> {
    let mut rng = sampling::rng(seed);
    let field = QField { grid, values: (0..grid.node_count()).map(|_| sampling::random_interior(&mut rng)).collect() };
    let dir: Vec<QTensor> = (0..grid.interior_count()).map(|_| sampling::random_tensor(&mut rng)).collect();
    let shifted = |t: f64| {
        let x: Vec<QTensor> = field.interior().iter().zip(&dir).map(|(q, d)| *q + *d * t).collect();
        let mut f = field.clone();
        f.set_interior(&x);
        f
    };
    let (_, grad) = functional.energy_gradient(&field)?;
    let analytic: f64 = grad.iter().zip(&dir).map(|(g, d)| g.dot(d)).sum();
    let t = 1e-5;
    let fd = (functional.energy(&shifted(t))?.total - functional.energy(&shifted(-t))?.total) / (2.0 * t);
    Ok((fd - analytic).abs() / analytic.abs())
}

/// The three retraction families.
pub fn retractions(samples: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = sampling::rng(seed);
    let mut exact = 0.0_f64;
    for _ in 0..samples {
        let q = sampling::random_interior(&mut rng);
        let a = rng.gen_range(0.0..0.4);
        let d = qtensor::distance(&q)?;
        let r = retract::h_a(&q, a)?;
        exact = exact.max((qtensor::distance(&r)? - d.max(a)).abs());
    }

    let (mut identity, mut floor) = (0.0_f64, f64::INFINITY);
    let per_case = (samples / 6).max(1);
    let mut power_count = 0;
    for s in [0.5, 1.0, 3.0] {
        let spec = PotentialSpec::inverse_power(s, 1.0);
        let pot = spec.compile()?;
        let lambda = exponents::lambda_s(1.0, 1.0, s)?;
        for a in [0.02, 0.05] {
            for _ in 0..per_case {
                let q = sampling::random_interior(&mut rng);
                let d = qtensor::distance(&q)?;
                let r = retract::tilde_h_a(&q, a, &pot)?;
                floor = floor.min(qtensor::distance(&r)? - a);
                if d >= lambda * a {
                    identity = identity.max((r - q).max_abs());
                }
                let d_far = rng.gen_range((lambda * a).min(SQRT6 / 6.0)..=SQRT6 / 6.0);
                let far = sampling::interior_at_distance(&mut rng, d_far);
                identity = identity.max((retract::tilde_h_a(&far, a, &pot)? - far).max_abs());
                power_count += 2;
            }
        }
    }

    let mut drop = f64::INFINITY;
    let mut log_count = 0;
    for (k0, m0) in [(1.0, 0.0), (0.5, 0.3)] {
        let pot = PotentialSpec::logarithmic(k0, m0).compile()?;
        let lambda0 = exponents::lambda_0(k0, m0, m0)?;
        for a in [0.02, 0.05] {
            let join = LogJoin::new(a, k0, m0, lambda0)?;
            for _ in 0..per_case {
                let d = rng.gen_range(0.0..=a);
                let q = sampling::interior_at_distance(&mut rng, d.max(1e-300));
                let r = retract::hat_h_a(&q, &join, &pot)?;
                drop = drop.min(pot.value(&q)? - pot.value(&r)? - k0);
                log_count += 1;
            }
        }
    }
    Ok(vec![
        Check::at_most("distance_retraction_exact", samples, exact, 1e-12),
        Check::at_most("power_retraction_identity_far_away", power_count, identity, 0.0),
        Check::at_least("power_retraction_floor", power_count / 2, floor, -1e-12),
        Check::at_least("log_retraction_drop", log_count, drop, -1e-9),
    ])
}

/// Levels for the scaling check: they stay well above the grid spacing.
pub fn scaling_levels() -> Vec<f64> {
    (0..6).map(|j| 0.24 * 2f64.powf(-0.5 * j as f64)).collect()
}

/// Fit of `|{d < a}| ~ a^β` on the radial synthetic field, `β = 3`.
pub fn scaling(n: usize) -> Result<Vec<Check>> {
    let grid = Grid::new(n)?;
    let field = analysis::synthetic_radial_field(grid, analysis::synthetic_center(grid));
    let report = analysis::scaling_fit(&field, &scaling_levels(), 0.0, None)?;
    let beta = report.beta;
    Ok(vec![
        Check::at_most("scaling_exponent", report.fitted_levels, beta.map_or(f64::INFINITY, |b| (b - 3.0).abs()), 0.15),
        Check::at_most("scaling_fit_residual", report.fitted_levels, report.residual.unwrap_or(f64::INFINITY), 0.05),
    ])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
}

/// Every sampled check at the given sample budget.
pub fn suite(level: Level, seed: u64) -> Result<Vec<Check>> {
    let (samples, brute, points, pairs, fields) = match level {
        Level::Quick => (1_000, 50, 200, 1_000, 2),
        Level::Full => (100_000, 10_000, 1_000, 10_000, 20),
    };
    let mut out = distance(samples, brute, 20, seed)?;
    out.extend(inequalities(samples * 10, seed + 1)?);
    out.extend(exponents(200, 100_000)?);
    out.extend(regularization(points, pairs, seed + 2)?);
    out.extend(gradients(fields, 8, seed + 3)?);
    out.extend(retractions(samples, seed + 4)?);
    out.extend(scaling(48)?);
    Ok(out)
}
