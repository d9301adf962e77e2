//! Sampling estimates of the growth, gradient and Hessian hypotheses.
//!
//! Growth is estimated along rays `t ↦ tP` towards random obstacle points `P`,
//! on which `d(tP) = (√6/6)(1 - t)`. Every estimate is over the sample set
//! only.

use rand::Rng;
use serde::Serialize;

use super::{Family, Potential};
use crate::error::Result;
use crate::qtensor::{self, QTensor, MAX_DISTANCE};
use crate::sampling;

/// Smallest distance probed by the samplers.
pub const MIN_SAMPLE_DISTANCE: f64 = 1e-6;
const POINTS_PER_RAY: usize = 8;

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrowthBounds {
    /// `m_s d^{-s} ≤ f ≤ M_s d^{-s}`.
    Power { s: f64, m_s: f64, big_m_s: f64 },
    /// `k(P) |ln d| + m0 ≤ f ≤ k(P) |ln d| + M0` with `k0 ≤ k(P) ≤ K0`.
    Log { k0: f64, big_k0: f64, m0: f64, big_m0: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub q: QTensor,
    pub distance: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    pub family: &'static str,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthBounds>,
    /// `C_s` (power growth) or `C0` (log growth).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient_constant: Option<f64>,
    /// `c_s` (power growth) or `c0` (log growth).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hessian_constant: Option<f64>,
    /// Smallest sampled second directional derivative.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_quadratic_form: Option<f64>,
    /// Set when the defining ratio keeps drifting in the deepest stratum.
    pub unbounded: bool,
    /// Sample attaining the reported extreme, or a sign violation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

impl HypothesisReport {
    fn new(pot: &Potential, samples: usize) -> Self {
        HypothesisReport {
            family: pot.family().name(),
            samples,
            growth: None,
            gradient_constant: None,
            hessian_constant: None,
            min_quadratic_form: None,
            unbounded: false,
            witness: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MidpointReport {
    pub pairs: usize,
    /// `min (f(Q1)+f(Q2))/2 - f(mid)`, normalized by `max(1, mean f)`.
    pub worst_slack: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<(QTensor, QTensor)>,
}

fn power_exponent(pot: &Potential) -> Option<f64> {
    match pot.family() {
        Family::InversePower { s, .. } => Some(*s),
        _ => None,
    }
}

/// Distances along one ray, log-spaced with a random shift, deepest last.
fn ray_distances<R: Rng>(rng: &mut R) -> [f64; POINTS_PER_RAY] {
    let (lo, hi) = (MIN_SAMPLE_DISTANCE.ln(), (0.9 * MAX_DISTANCE).ln());
    let step = (hi - lo) / (POINTS_PER_RAY - 1) as f64;
    let shift: f64 = rng.gen::<f64>() * 0.5 * step;
    let mut d = [0.0; POINTS_PER_RAY];
    for (j, dj) in d.iter_mut().enumerate() {
        *dj = (hi - shift - step * j as f64).max(lo).exp();
    }
    d
}

fn ray_point(p: &QTensor, d: f64) -> QTensor {
    (1.0 - d / MAX_DISTANCE) * *p
}

pub fn check_growth(pot: &Potential, samples: usize, seed: u64) -> Result<HypothesisReport> {
    let mut rng = sampling::rng(seed);
    let rays = (samples / POINTS_PER_RAY).max(1);
    let mut report = HypothesisReport::new(pot, rays * POINTS_PER_RAY);
    match power_exponent(pot) {
        Some(s) => {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            let (mut deep_lo, mut deep_hi) = (f64::INFINITY, 0.0f64);
            for _ in 0..rays {
                let p = sampling::random_boundary(&mut rng);
                for (j, d) in ray_distances(&mut rng).into_iter().enumerate() {
                    let q = ray_point(&p, d);
                    let d = qtensor::distance(&q)?;
                    let r = pot.value(&q)? * d.powf(s);
                    if r < lo {
                        lo = r;
                        report.witness = Some(Witness { q, distance: d, ratio: r });
                    }
                    hi = hi.max(r);
                    if j + 1 == POINTS_PER_RAY {
                        deep_lo = deep_lo.min(r);
                        deep_hi = deep_hi.max(r);
                    }
                }
            }
            report.unbounded = !(hi.is_finite() && lo > 0.0) || deep_hi > 2.0 * hi.min(1e300) || deep_lo < 0.5 * lo;
            report.growth = Some(GrowthBounds::Power { s, m_s: lo, big_m_s: hi });
        }
        None => {
            let (mut k0, mut k1) = (f64::INFINITY, 0.0f64);
            let (mut m0, mut m1) = (f64::INFINITY, f64::NEG_INFINITY);
            let mut drift = 0.0f64;
            for _ in 0..rays {
                let p = sampling::random_boundary(&mut rng);
                let ds = ray_distances(&mut rng);
                let mut pts = Vec::with_capacity(POINTS_PER_RAY);
                for d in ds {
                    let q = ray_point(&p, d);
                    let d = qtensor::distance(&q)?;
                    pts.push((q, d.ln().abs(), pot.value(&q)?));
                }
                let n = pts.len();
                let slope = |a: usize, b: usize| (pts[b].2 - pts[a].2) / (pts[b].1 - pts[a].1);
                let k = slope(n - 2, n - 1);
                drift = drift.max((k - slope(n - 3, n - 2)).abs() / k.abs().max(1e-300));
                k0 = k0.min(k);
                k1 = k1.max(k);
                for (q, ld, f) in &pts {
                    let m = f - k * ld;
                    if m < m0 {
                        m0 = m;
                        report.witness = Some(Witness { q: *q, distance: (-ld).exp(), ratio: k });
                    }
                    m1 = m1.max(m);
                }
            }
            report.unbounded = !(k0 > 0.0 && k1.is_finite()) || drift > 0.25;
            report.growth = Some(GrowthBounds::Log { k0, big_k0: k1, m0, big_m0: m1 });
        }
    }
    Ok(report)
}

/// `k0` used by the log-type gradient and Hessian bounds.
fn log_constant(pot: &Potential, seed: u64) -> Result<f64> {
    Ok(match pot.family() {
        Family::Logarithmic { k, .. } => *k,
        _ => match check_growth(pot, 256, seed ^ 0x9e37_79b9)?.growth {
            Some(GrowthBounds::Log { k0, .. }) => k0,
            _ => unreachable!("log growth report"),
        },
    })
}

/// Interior sample stratified in `log d`, skipping near-degenerate `λ1` when
/// the potential depends on the exact smallest eigenvalue.
fn stratified_sample<R: Rng>(pot: &Potential, rng: &mut R) -> Result<(QTensor, f64)> {
    loop {
        let d = sampling::log_uniform_distance(rng, MIN_SAMPLE_DISTANCE);
        let q = sampling::interior_at_distance(rng, d);
        let s = qtensor::eigen(&q)?;
        if pot.is_radial() && pot.spec().smoothing_tau == 0.0 && s.lower_gap() < 1e-3 * d.max(1e-3) {
            continue;
        }
        return Ok((q, d));
    }
}

pub fn check_gradient_bound(pot: &Potential, samples: usize, seed: u64) -> Result<HypothesisReport> {
    let mut rng = sampling::rng(seed);
    let mut report = HypothesisReport::new(pot, samples);
    let power = power_exponent(pot);
    let k0 = match power {
        Some(_) => 0.0,
        None => log_constant(pot, seed)?,
    };
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let (q, d) = stratified_sample(pot, &mut rng)?;
        let (f, g) = pot.value_and_gradient(&q)?;
        let ratio = match power {
            Some(s) => g.norm().powf(s) / f.powf(s + 1.0),
            None => g.norm() * (-f / k0).exp(),
        };
        if ratio > worst {
            worst = ratio;
            report.witness = Some(Witness { q, distance: d, ratio });
        }
    }
    report.gradient_constant = Some(worst);
    report.unbounded = !worst.is_finite();
    Ok(report)
}

pub fn check_hessian_bound(pot: &Potential, samples: usize, seed: u64) -> Result<HypothesisReport> {
    let mut rng = sampling::rng(seed);
    let mut report = HypothesisReport::new(pot, samples);
    let power = power_exponent(pot);
    let mut best = f64::INFINITY;
    let mut min_form = f64::INFINITY;
    for _ in 0..samples {
        let (q, d) = stratified_sample(pot, &mut rng)?;
        let y = sampling::random_tensor(&mut rng);
        let y = (1.0 / y.norm()) * y;
        let h = 1e-3 * d;
        let (f, g) = pot.value_and_gradient(&q)?;
        let gp = pot.gradient(&(q + h * y))?;
        let gm = pot.gradient(&(q - h * y))?;
        let form = (gp - gm).dot(&y) / (2.0 * h);
        let slope = g.dot(&y);
        min_form = min_form.min(form / f.max(1.0));
        if slope * slope < 1e-300 {
            continue;
        }
        let ratio = match power {
            Some(_) => form * f / (slope * slope),
            None => form / (slope * slope),
        };
        if ratio < best {
            best = ratio;
            report.witness = Some(Witness { q, distance: d, ratio });
        }
    }
    report.hessian_constant = Some(best);
    report.min_quadratic_form = Some(min_form);
    Ok(report)
}

pub fn convexity_midpoint_check(pot: &Potential, pairs: usize, seed: u64) -> Result<MidpointReport> {
    let mut rng = sampling::rng(seed);
    let mut report = MidpointReport { pairs, worst_slack: f64::INFINITY, witness: None };
    for i in 0..pairs {
        // Alternate between uniform pairs and pairs hugging the obstacle.
        let (q1, q2) = if i % 2 == 0 {
            (sampling::random_interior(&mut rng), sampling::random_interior(&mut rng))
        } else {
            let d1 = sampling::log_uniform_distance(&mut rng, 1e-4);
            let d2 = sampling::log_uniform_distance(&mut rng, 1e-4);
            (sampling::interior_at_distance(&mut rng, d1), sampling::interior_at_distance(&mut rng, d2))
        };
        let (f1, f2) = (pot.value(&q1)?, pot.value(&q2)?);
        let fm = pot.value(&(0.5 * (q1 + q2)))?;
        let mean = 0.5 * (f1 + f2);
        let slack = (mean - fm) / mean.max(1.0);
        if slack < report.worst_slack {
            report.worst_slack = slack;
            report.witness = Some((q1, q2));
        }
    }
    if pairs == 0 {
        report.worst_slack = 0.0;
    }
    Ok(report)
}
