//! Radial retractions that push tensors away from the obstacle, and the
//! cutoff-blended comparison fields built from them.
//!
//! All maps have the form `Q ↦ η·Q` with `0 < η ≤ 1`. Scaling preserves the
//! eigenframe and `d(ηQ) = √6/6 - η(√6/6 - d(Q))`, so the resulting distance
//! is known in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents;
use crate::potentials::{Family, Potential, PotentialSpec};
use crate::qtensor::{self, QTensor, MAX_DISTANCE, SQRT6};
use crate::solver::QField;

/// Constant in the derivative envelope of the inverse-power join.
pub const POWER_ENVELOPE_C: f64 = 8.0;
/// Constant in the derivative envelope of the logarithmic join.
pub const LOG_ENVELOPE_C: f64 = 4.0;
/// Points used for the a posteriori checks of each join.
const CHECK_POINTS: usize = 2048;

fn outer_branch(x: f64, a: f64) -> f64 {
    (1.0 - SQRT6 * a) / (1.0 - SQRT6 * x)
}

fn outer_branch_derivative(x: f64, a: f64) -> f64 {
    let den = 1.0 - SQRT6 * x;
    SQRT6 * (1.0 - SQRT6 * a) / (den * den)
}

/// `min{1, (1 - √6a)/(1 - √6x)}`.
pub fn eta_a(x: f64, a: f64) -> f64 {
    if x >= a {
        1.0
    } else {
        outer_branch(x, a)
    }
}

/// Scale `q` (at distance `d`, possibly negative) so that it lands at
/// distance exactly `a`.
pub(crate) fn push_to_distance(q: &QTensor, d: f64, a: f64) -> QTensor {
    *q * outer_branch(d, a)
}

fn checked_distance(q: &QTensor) -> Result<f64> {
    let d = qtensor::distance(q)?;
    if d < 0.0 {
        return Err(Error::Domain(format!("tensor lies outside the physical set (d = {d:.3e})")));
    }
    Ok(d)
}

fn check_level(a: f64) -> Result<()> {
    if !(0.0..MAX_DISTANCE).contains(&a) {
        return Err(Error::Domain(format!("retraction level must lie in [0, √6/6), got {a}")));
    }
    Ok(())
}

/// `η_a(d(Q)) Q`: identity above distance `a`, exact pushback to `a` below.
pub fn h_a(q: &QTensor, a: f64) -> Result<QTensor> {
    check_level(a)?;
    let d = checked_distance(q)?;
    Ok(if d >= a { *q } else { push_to_distance(q, d, a) })
}

/// `η̃_a` for an inverse-power potential with lower constant `m_s`.
///
/// Written in the distance variable `x = (m_s/y)^{1/s}`, the outer branches
/// are `η = 1` for `x ≥ a·2^{1/s}` and `η = (1-√6a)/(1-√6x)` for
/// `x ≤ a·2^{-1/s}`. In between, `η` follows the outer branch up to a node
/// `x_m < a` and then rises to 1 along the quadratic with matching value and
/// slope at `x_m` and zero slope at `x_e`. The quadratic lies below both its
/// end tangents, so `η ≤ min{1, (1-√6a)/(1-√6x)}` throughout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerJoin {
    pub a: f64,
    pub m_s: f64,
    pub s: f64,
    pub x_m: f64,
    pub x_e: f64,
    g_m: f64,
}

impl PowerJoin {
    pub fn new(a: f64, m_s: f64, s: f64) -> Result<Self> {
        if !(s > 0.0 && m_s > 0.0 && s.is_finite() && m_s.is_finite()) {
            return Err(Error::Domain(format!("need s > 0 and m_s > 0, got s={s}, m_s={m_s}")));
        }
        if !(a > 0.0 && a < MAX_DISTANCE) {
            return Err(Error::Domain(format!("retraction level must lie in (0, √6/6), got {a}")));
        }
        let x_lo = a * 2f64.powf(-1.0 / s);
        let x_hi = a * 2f64.powf(1.0 / s);
        let mut theta = 0.0;
        for _ in 0..60 {
            let x_m = x_lo + theta * (a - x_lo);
            let g_m = outer_branch(x_m, a);
            let slope = outer_branch_derivative(x_m, a);
            let x_e = x_m + 2.0 * (1.0 - g_m) / slope;
            if x_e <= x_hi && g_m < 1.0 {
                if slope > POWER_ENVELOPE_C {
                    return Err(Error::Domain(format!(
                        "level a = {a} too large: join slope {slope:.3} exceeds the envelope constant {POWER_ENVELOPE_C}"
                    )));
                }
                let join = PowerJoin { a, m_s, s, x_m, x_e, g_m };
                join.verify()?;
                return Ok(join);
            }
            theta = 0.5 * (1.0 + theta);
        }
        Err(Error::Domain(format!("no admissible join for a = {a}, s = {s}")))
    }

    fn verify(&self) -> Result<()> {
        let (lo, hi) = (self.x_m * 0.5, self.x_e * 1.5);
        for i in 0..=CHECK_POINTS {
            let x = lo + (hi - lo) * i as f64 / CHECK_POINTS as f64;
            let v = self.eta_x(x);
            let cap = eta_a(x, self.a);
            if v > cap + 1e-15 || v <= 0.0 {
                return Err(Error::Domain(format!("join exceeds min{{1, outer branch}} at x = {x:.6e}")));
            }
            if self.eta_x_derivative(x).abs() > POWER_ENVELOPE_C {
                return Err(Error::Domain(format!("join violates the derivative envelope at x = {x:.6e}")));
            }
        }
        Ok(())
    }

    /// `η` as a function of the distance variable.
    pub fn eta_x(&self, x: f64) -> f64 {
        if x >= self.x_e {
            1.0
        } else if x <= self.x_m {
            outer_branch(x.max(0.0), self.a)
        } else {
            let t = (self.x_e - x) / (self.x_e - self.x_m);
            1.0 - (1.0 - self.g_m) * t * t
        }
    }

    /// `dη/dx`.
    pub fn eta_x_derivative(&self, x: f64) -> f64 {
        if x >= self.x_e {
            0.0
        } else if x <= self.x_m {
            outer_branch_derivative(x.max(0.0), self.a)
        } else {
            let w = self.x_e - self.x_m;
            2.0 * (1.0 - self.g_m) * (self.x_e - x) / (w * w)
        }
    }

    fn x_of_y(&self, y: f64) -> f64 {
        if y <= 0.0 {
            f64::INFINITY
        } else {
            (self.m_s / y).powf(1.0 / self.s)
        }
    }

    pub fn eta(&self, y: f64) -> f64 {
        self.eta_x(self.x_of_y(y))
    }

    /// `dη/dy`.
    pub fn derivative(&self, y: f64) -> f64 {
        let x = self.x_of_y(y);
        if !x.is_finite() {
            return 0.0;
        }
        -self.eta_x_derivative(x) * x / (self.s * y)
    }

    /// `C m_s^{1/s} s^{-1} y^{-1/s-1}`, the bound on `|dη/dy|`.
    pub fn envelope(&self, y: f64) -> f64 {
        POWER_ENVELOPE_C * self.m_s.powf(1.0 / self.s) / self.s * y.powf(-1.0 / self.s - 1.0)
    }

    /// `(m_s/(2a^s), 2m_s/a^s)`.
    pub fn band(&self) -> (f64, f64) {
        let as_ = self.a.powf(self.s);
        (self.m_s / (2.0 * as_), 2.0 * self.m_s / as_)
    }

    /// `sup |1 - η| / a`.
    pub fn deviation_constant(&self) -> f64 {
        SQRT6
    }
}

fn inverse_power_constants(spec: &PotentialSpec) -> Result<(f64, f64)> {
    match spec.family {
        Family::InversePower { s, m } if spec.smoothing_tau == 0.0 => Ok((s, m)),
        _ => Err(Error::Domain("this retraction needs an unsmoothed inverse-power potential".into())),
    }
}

pub fn tilde_eta_a(y: f64, a: f64, spec: &PotentialSpec) -> Result<f64> {
    let (s, m) = inverse_power_constants(spec)?;
    Ok(PowerJoin::new(a, m, s)?.eta(y))
}

/// `η̃_a(f(Q)) Q`. Identity when `d(Q) ≥ Λ_s a` and never below distance `a`.
pub fn tilde_h_a(q: &QTensor, a: f64, potential: &Potential) -> Result<QTensor> {
    let (s, m) = inverse_power_constants(potential.spec())?;
    let join = PowerJoin::new(a, m, s)?;
    apply_power(q, &join, potential)
}

fn apply_power(q: &QTensor, join: &PowerJoin, potential: &Potential) -> Result<QTensor> {
    checked_distance(q)?;
    Ok(*q * join.eta(potential.value(q)?))
}

/// `η̂_a` for a logarithmic potential: 1 below `k0|ln a| + m0 - e^{m0/k0}`,
/// `(1 - √6Λ0 a)/(1 - √6a)` above `k0|ln a| + m0`, and a cubic smoothstep in
/// between.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogJoin {
    pub a: f64,
    pub k0: f64,
    pub m0: f64,
    pub lambda0: f64,
    pub lo: f64,
    pub hi: f64,
    pub floor: f64,
}

impl LogJoin {
    pub fn new(a: f64, k0: f64, m0: f64, lambda0: f64) -> Result<Self> {
        if !(k0 > 0.0 && lambda0 >= 1.0 && m0.is_finite() && lambda0.is_finite()) {
            return Err(Error::Domain(format!("need k0 > 0, Λ0 ≥ 1; got k0={k0}, Λ0={lambda0}")));
        }
        if !(a > 0.0 && a < 1.0 && SQRT6 * lambda0 * a < 1.0) {
            return Err(Error::Domain(format!("level a = {a} must satisfy 0 < a and √6 Λ0 a < 1")));
        }
        let hi = k0 * a.ln().abs() + m0;
        let lo = hi - (m0 / k0).exp();
        let join = LogJoin { a, k0, m0, lambda0, lo, hi, floor: (1.0 - SQRT6 * lambda0 * a) / (1.0 - SQRT6 * a) };
        for i in 0..=CHECK_POINTS {
            let y = lo + (hi - lo) * i as f64 / CHECK_POINTS as f64;
            if join.derivative(y).abs() > join.envelope(y) {
                return Err(Error::Domain(format!("log join violates the derivative envelope at y = {y:.6e}")));
            }
        }
        Ok(join)
    }

    pub fn eta(&self, y: f64) -> f64 {
        if y <= self.lo {
            1.0
        } else if y >= self.hi {
            self.floor
        } else {
            let t = (y - self.lo) / (self.hi - self.lo);
            1.0 + (self.floor - 1.0) * t * t * (3.0 - 2.0 * t)
        }
    }

    pub fn derivative(&self, y: f64) -> f64 {
        if y <= self.lo || y >= self.hi {
            0.0
        } else {
            let w = self.hi - self.lo;
            let t = (y - self.lo) / w;
            (self.floor - 1.0) * 6.0 * t * (1.0 - t) / w
        }
    }

    /// `4Λ0 e^{-y/k0}`.
    pub fn envelope(&self, y: f64) -> f64 {
        LOG_ENVELOPE_C * self.lambda0 * (-y / self.k0).exp()
    }

    /// `sup |1 - η| / a`.
    pub fn deviation_constant(&self) -> f64 {
        (1.0 - self.floor) / self.a
    }
}

pub fn hat_eta_a(y: f64, a: f64, k0: f64, m0: f64, lambda0: f64) -> Result<f64> {
    Ok(LogJoin::new(a, k0, m0, lambda0)?.eta(y))
}

/// `η̂_a(f(Q)) Q` for the potential `f`.
pub fn hat_h_a(q: &QTensor, join: &LogJoin, potential: &Potential) -> Result<QTensor> {
    checked_distance(q)?;
    Ok(*q * join.eta(potential.value(q)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RetractionSpec {
    Distance {
        a: f64,
    },
    PowerPotential {
        a: f64,
        spec: PotentialSpec,
    },
    /// `spec` defaults to `-k0 ln d + m0`; `lambda0` defaults to the value
    /// for that potential.
    LogPotential {
        a: f64,
        k0: f64,
        m0: f64,
        #[serde(default, rename = "Lambda0")]
        lambda0: Option<f64>,
        #[serde(default)]
        spec: Option<PotentialSpec>,
    },
}

/// A compiled retraction.
#[derive(Clone)]
pub enum Retraction {
    Distance { a: f64 },
    Power { join: PowerJoin, potential: Potential },
    Log { join: LogJoin, potential: Potential },
}

impl RetractionSpec {
    pub fn build(&self) -> Result<Retraction> {
        match self {
            RetractionSpec::Distance { a } => {
                check_level(*a)?;
                Ok(Retraction::Distance { a: *a })
            }
            RetractionSpec::PowerPotential { a, spec } => {
                let (s, m) = inverse_power_constants(spec)?;
                Ok(Retraction::Power { join: PowerJoin::new(*a, m, s)?, potential: spec.compile()? })
            }
            RetractionSpec::LogPotential { a, k0, m0, lambda0, spec } => {
                let lambda0 = match lambda0 {
                    Some(l) => *l,
                    None => exponents::lambda_0(*k0, *m0, *m0)?,
                };
                let spec = spec.clone().unwrap_or_else(|| PotentialSpec::logarithmic(*k0, *m0));
                Ok(Retraction::Log { join: LogJoin::new(*a, *k0, *m0, lambda0)?, potential: spec.compile()? })
            }
        }
    }
}

impl Retraction {
    pub fn level(&self) -> f64 {
        match self {
            Retraction::Distance { a } => *a,
            Retraction::Power { join, .. } => join.a,
            Retraction::Log { join, .. } => join.a,
        }
    }

    pub fn apply(&self, q: &QTensor) -> Result<QTensor> {
        match self {
            Retraction::Distance { a } => h_a(q, *a),
            Retraction::Power { join, potential } => apply_power(q, join, potential),
            Retraction::Log { join, potential } => hat_h_a(q, join, potential),
        }
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Cutoff equal to 1 on `[inner, 1 - inner]³`, 0 outside
/// `[outer, 1 - outer]³`, and a product of cubic smoothsteps in between.
pub fn cutoff(x: [f64; 3], inner: f64, outer: f64) -> f64 {
    x.iter().map(|&xi| smoothstep((xi.min(1.0 - xi) - outer) / (inner - outer))).product()
}

/// `ρ r(Q) + (1 - ρ) Q` with `ρ` from [`cutoff`]. Nodes outside the outer
/// window, including the Dirichlet layer, are copied unchanged.
pub fn comparison_field(
    field: &QField,
    retraction: &Retraction,
    inner_margin: f64,
    outer_margin: f64,
) -> Result<QField> {
    if !(0.0 < outer_margin && outer_margin < inner_margin && inner_margin < 0.5) {
        return Err(Error::InvalidInput(format!(
            "margins must satisfy 0 < outer < inner < 1/2, got outer={outer_margin}, inner={inner_margin}"
        )));
    }
    let grid = field.grid;
    let mut out = field.clone();
    for (idx, q) in field.values.iter().enumerate() {
        let rho = cutoff(grid.position(idx), inner_margin, outer_margin);
        if rho > 0.0 {
            let r = retraction.apply(q)?;
            out.values[idx] = *q + (r - *q) * rho;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling;

    #[test]
    fn eta_values() {
        assert_eq!(eta_a(0.1, 0.1), 1.0);
        let v = (1.0 - 0.1 * SQRT6) / (1.0 - 0.05 * SQRT6);
        assert!((eta_a(0.05, 0.1) - v).abs() < 1e-15 && (v - 0.860_431_992_752_123).abs() < 1e-14);
        assert!((eta_a(0.0, 0.1) - (1.0 - 0.1 * SQRT6)).abs() < 1e-15);
    }

    #[test]
    fn h_a_distance() {
        let mut rng = sampling::rng(1);
        let q = sampling::interior_at_distance(&mut rng, 0.2);
        assert_eq!(h_a(&q, 0.1).unwrap(), q);
        let q = sampling::interior_at_distance(&mut rng, 0.05);
        let d = qtensor::distance(&h_a(&q, 0.1).unwrap()).unwrap();
        assert!((d - 0.1).abs() < 1e-12);
        assert_eq!(h_a(&QTensor::ZERO, 0.1).unwrap(), QTensor::ZERO);
        let outside = QTensor::diag(-0.5, 0.25, 0.25);
        assert!(h_a(&outside, 0.1).is_err());
    }

    #[test]
    fn power_join_properties() {
        for &s in &[0.1, 0.5, 1.0, 3.0, 12.0] {
            for &a in &[1e-3, 0.01, 0.05] {
                let j = PowerJoin::new(a, 1.0, s).unwrap();
                let (y_lo, y_hi) = j.band();
                assert_eq!(j.eta(y_lo), 1.0);
                assert_eq!(j.derivative(y_lo * 0.999), 0.0);
                let outer = |y: f64| outer_branch((1.0 / y).powf(1.0 / s), a);
                assert!((j.eta(y_hi) - outer(y_hi)).abs() < 1e-14);
                let x_lo = a * 2f64.powf(-1.0 / s);
                let outer_dy = -outer_branch_derivative(x_lo, a) * x_lo / (s * y_hi);
                assert!((j.derivative(y_hi) - outer_dy).abs() <= 1e-10 * outer_dy.abs());
                for x in [j.x_m, j.x_e] {
                    let (l, r) = (j.eta_x_derivative(x * (1.0 - 1e-12)), j.eta_x_derivative(x * (1.0 + 1e-12)));
                    assert!((l - r).abs() <= 1e-6, "slope jump {l} vs {r}");
                    let (l, r) = (j.eta_x(x * (1.0 - 1e-12)), j.eta_x(x * (1.0 + 1e-12)));
                    assert!((l - r).abs() <= 1e-9);
                }
                assert!((j.eta(1e300) - (1.0 - SQRT6 * a)).abs() < 1e-12);
                let mut prev = 1.0;
                for i in 0..=400 {
                    let y = y_lo * (y_hi * 2.0 / y_lo).powf(i as f64 / 400.0);
                    let v = j.eta(y);
                    assert!(v <= prev + 1e-15, "nonincreasing");
                    assert!(j.derivative(y).abs() <= j.envelope(y) * (1.0 + 1e-12));
                    prev = v;
                }
            }
        }
        assert!(PowerJoin::new(0.41, 1.0, 1.0).is_err());
    }

    #[test]
    fn tilde_h_identity_and_floor() {
        let spec = PotentialSpec::inverse_power(1.5, 1.0);
        let p = spec.compile().unwrap();
        let a = 0.02;
        let big_lambda = exponents::lambda_s(1.0, 1.0, 1.5).unwrap();
        let mut rng = sampling::rng(5);
        let q = sampling::interior_at_distance(&mut rng, big_lambda * a * 1.1);
        assert_eq!(tilde_h_a(&q, a, &p).unwrap(), q);
        let q = sampling::interior_at_distance(&mut rng, a / 2.0);
        assert!(qtensor::distance(&tilde_h_a(&q, a, &p).unwrap()).unwrap() >= a - 1e-12);
        assert_eq!(tilde_h_a(&QTensor::ZERO, a, &p).unwrap(), QTensor::ZERO);
        assert!(tilde_eta_a(1.0, a, &PotentialSpec::logarithmic(1.0, 0.0)).is_err());
    }

    #[test]
    fn log_join_drop() {
        let (k0, m0) = (0.7, 0.3);
        let lambda0 = exponents::lambda_0(k0, m0, m0).unwrap();
        let a = 0.01;
        let j = LogJoin::new(a, k0, m0, lambda0).unwrap();
        let p = PotentialSpec::logarithmic(k0, m0).compile().unwrap();
        assert_eq!(j.eta(j.lo - 1.0), 1.0);
        let mut rng = sampling::rng(9);
        for _ in 0..200 {
            let d = a * rand::Rng::gen::<f64>(&mut rng).max(1e-6);
            let q = sampling::interior_at_distance(&mut rng, d);
            let r = hat_h_a(&q, &j, &p).unwrap();
            let drop = p.value(&q).unwrap() - p.value(&r).unwrap();
            assert!(drop >= k0 - 1e-9, "drop {drop}");
        }
        let half = LogJoin::new(a / 2.0, k0, m0, lambda0).unwrap();
        assert!(half.lo > j.lo);
    }

    #[test]
    fn comparison_field_basics() {
        let grid = crate::solver::Grid::new(8).unwrap();
        let mut rng = sampling::rng(2);
        let mut field = QField::constant(grid, QTensor::diag(-0.1, -0.1, 0.2));
        let vals: Vec<QTensor> = (0..grid.interior_count()).map(|_| sampling::random_interior(&mut rng)).collect();
        field.set_interior(&vals);
        let zero = RetractionSpec::Distance { a: 0.0 }.build().unwrap();
        assert_eq!(comparison_field(&field, &zero, 0.3, 0.1).unwrap(), field);
        let r = RetractionSpec::Distance { a: 0.1 }.build().unwrap();
        let c = comparison_field(&field, &r, 0.3, 0.1).unwrap();
        for idx in 0..grid.node_count() {
            let x = grid.position(idx);
            if x.iter().any(|&v| v.min(1.0 - v) < 0.1) {
                assert_eq!(c.values[idx], field.values[idx]);
            }
            if x.iter().all(|&v| v.min(1.0 - v) >= 0.3) {
                let d = qtensor::distance(&c.values[idx]).unwrap();
                assert!(d >= 0.1 - 1e-12);
            }
        }
    }
}
