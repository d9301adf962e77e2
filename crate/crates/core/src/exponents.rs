//! Integrability exponents, critical growth exponents and dimension bounds
//! as functions of the elastic anisotropy `A`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::optim;

/// Smallest admissible anisotropy (exclusive).
pub const A_MIN: f64 = -0.6;

/// `√(18/5)`, end of the first branch of `p(A)`.
pub fn first_breakpoint() -> f64 {
    (18.0f64 / 5.0).sqrt()
}

/// `3/5 + √(18/5)`, end of the second branch of `p(A)`.
pub fn second_breakpoint() -> f64 {
    0.6 + first_breakpoint()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `A = 0`: no restriction (`p = ∞`).
    Zero,
    One,
    Two,
    Three,
}

impl Branch {
    pub fn label(self) -> &'static str {
        match self {
            Branch::Zero => "0",
            Branch::One => "1",
            Branch::Two => "2",
            Branch::Three => "3",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExponentTable {
    pub a: f64,
    pub p: f64,
    pub s: f64,
    pub q_max: f64,
    pub branch: Branch,
}

fn check_a(a: f64) -> Result<()> {
    if !(a > A_MIN) || !a.is_finite() {
        return Err(Error::Domain(format!("A must be finite and > -3/5, got {a}")));
    }
    Ok(())
}

/// Largest `p` allowed by the splitting parameter `ω`.
pub fn p_of_a_omega(a: f64, omega: f64) -> Result<f64> {
    check_a(a)?;
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::Domain(format!("ω must lie in [0, 1], got {omega}")));
    }
    if 0.6 * omega + a < 0.0 {
        return Err(Error::Domain(format!("ω = {omega} violates (3/5)ω + A ≥ 0 for A = {a}")));
    }
    if a == 0.0 {
        return Ok(f64::INFINITY);
    }
    let y = omega + 5.0 * a / 3.0;
    let root = (81.0 / 25.0 * y * y + 18.0 / 5.0 * a * a * y * (1.0 - omega)).sqrt();
    Ok(1.0 + (1.8 * y + root) / (2.0 * a * a))
}

/// Closed-form `p(A) = sup_ω p(A, ω)` with `s(A)` and `q_max = 6p(A)`.
pub fn p_of_a(a: f64) -> Result<ExponentTable> {
    check_a(a)?;
    if a == 0.0 {
        return Ok(ExponentTable { a, p: f64::INFINITY, s: 0.0, q_max: f64::INFINITY, branch: Branch::Zero });
    }
    let (p, branch) = if a <= first_breakpoint() {
        (1.0 + 3.0 / a + 9.0 / (5.0 * a * a), Branch::One)
    } else if a <= second_breakpoint() {
        (1.0 + (3.0 + 5.0 * a) / (2.0 * 10f64.sqrt() * a - 6.0), Branch::Two)
    } else {
        (1.0 + (3.0 + (9.0 + 6.0 * a).sqrt()) / (2.0 * a), Branch::Three)
    };
    Ok(ExponentTable { a, p, s: 2.0 / (2.0 * p - 1.0), q_max: 6.0 * p, branch })
}

/// Numerical supremum of `p(A, ·)` over the admissible `ω`: a uniform scan
/// with `grid` points refined by golden section around the best sample.
pub fn p_sup_oracle(a: f64, grid: usize) -> Result<f64> {
    check_a(a)?;
    if a == 0.0 {
        return Err(Error::Domain("p_sup_oracle needs A ≠ 0".into()));
    }
    let grid = grid.max(3);
    let lo = (-5.0 * a / 3.0).max(0.0);
    let hi = 1.0;
    let f = |w: f64| p_of_a_omega(a, w.clamp(lo, hi)).unwrap_or(f64::NEG_INFINITY);
    let step = (hi - lo) / (grid - 1) as f64;
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for i in 0..grid {
        let v = f(lo + step * i as f64);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let a0 = lo + step * best_i.saturating_sub(1) as f64;
    let b0 = (lo + step * (best_i + 1) as f64).min(hi);
    let (_, refined) = optim::golden_max(f, a0, b0, 1e-12);
    Ok(best.max(refined).max(f(a0)).max(f(b0)))
}

pub fn s_of_a(a: f64) -> Result<f64> {
    Ok(p_of_a(a)?.s)
}

pub fn q_max(a: f64) -> Result<f64> {
    Ok(p_of_a(a)?.q_max)
}

/// A Hausdorff-dimension bound for the contact set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum DimensionBound {
    /// The contact set is empty.
    Empty,
    Bound(f64),
}

impl DimensionBound {
    pub fn value(self) -> Option<f64> {
        match self {
            DimensionBound::Empty => None,
            DimensionBound::Bound(v) => Some(v),
        }
    }
}

fn check_s(s: f64) -> Result<()> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Domain(format!("growth exponent s must be positive, got {s}")));
    }
    Ok(())
}

/// `3(1 - s/s(A))` for `0 < s ≤ s(A)`; empty contact set for `s > s(A)`.
pub fn dim_bound_basic(s: f64, a: f64) -> Result<DimensionBound> {
    check_s(s)?;
    let sa = s_of_a(a)?;
    if s > sa {
        return Ok(DimensionBound::Empty);
    }
    Ok(DimensionBound::Bound(3.0 * (1.0 - s / sa)))
}

/// Bound under the additional gradient and Hessian hypotheses (inverse-power
/// growth).
pub fn dim_bound_improved_power(s: f64, a: f64) -> Result<DimensionBound> {
    check_s(s)?;
    let t = p_of_a(a)?;
    let sa = t.s;
    if s > sa {
        return Ok(DimensionBound::Empty);
    }
    let v = if t.p <= 2.0 {
        3.0 * (1.0 - (3.0 * s + 2.0) / (3.0 * sa + 2.0))
    } else {
        3.0 - s / sa - 2.0 * (2.0 + s) / (2.0 + sa)
    };
    Ok(DimensionBound::Bound(v))
}

/// Bound for logarithmic growth with constants `k0 ≤ K0`.
pub fn dim_bound_improved_log(k0: f64, big_k0: f64, a: f64) -> Result<f64> {
    if !(k0 > 0.0 && big_k0 >= k0 && big_k0.is_finite()) {
        return Err(Error::Domain(format!("need 0 < k0 ≤ K0, got k0={k0}, K0={big_k0}")));
    }
    let p = p_of_a(a)?.p;
    let r = (big_k0 - k0) / k0;
    if p.is_infinite() {
        return Ok(if r > 0.0 { 3.0 } else { 1.0 });
    }
    Ok(if p <= 2.0 {
        3.0 - (6.0 * p - 3.0) / (6.0 * p * r + 2.0 * p + 2.0)
    } else {
        3.0 - (2.0 * p - 1.0) / (p * (r * p + 1.0))
    })
}

/// `Λ_s = (2 M_s / m_s)^{1/s}`.
pub fn lambda_s(m_s: f64, big_m_s: f64, s: f64) -> Result<f64> {
    if !(m_s > 0.0 && big_m_s >= m_s && s > 0.0) {
        return Err(Error::Domain(format!("need M_s ≥ m_s > 0 and s > 0, got {m_s}, {big_m_s}, {s}")));
    }
    Ok((2.0 * big_m_s / m_s).powf(1.0 / s))
}

/// `Λ_0 = exp(1 + (M_0 - m_0)/k_0)`.
pub fn lambda_0(k0: f64, m0: f64, big_m0: f64) -> Result<f64> {
    if !(k0 > 0.0 && big_m0 >= m0) {
        return Err(Error::Domain(format!("need k0 > 0 and M0 ≥ m0, got {k0}, {m0}, {big_m0}")));
    }
    Ok((1.0 + (big_m0 - m0) / k0).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Coercivity {
    /// `L1 + L3`, `2L1 - L3`, `L1 + (5/3)L2 + (1/6)L3`.
    pub margins: [f64; 3],
    pub coercive: bool,
}

pub fn coercivity_check(l1: f64, l2: f64, l3: f64) -> Coercivity {
    let margins = [l1 + l3, 2.0 * l1 - l3, l1 + 5.0 / 3.0 * l2 + l3 / 6.0];
    Coercivity { margins, coercive: margins.iter().all(|&m| m > 0.0) }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `p(A, ω)` through the factored form `1 + g(ω + 5A/3)/(2A²)` with
    /// `g(y) = 9y/5 + √(9y(B1 y + B2)/5)`.
    fn p_factored(a: f64, omega: f64) -> f64 {
        let y = omega + 5.0 * a / 3.0;
        let b1 = 1.8 - 2.0 * a * a;
        let b2 = 2.0 * a * a * (1.0 + 5.0 * a / 3.0);
        1.0 + (1.8 * y + (1.8 * y * (b1 * y + b2)).sqrt()) / (2.0 * a * a)
    }

    #[test]
    fn omega_form() {
        assert!((p_of_a_omega(1.0, 1.0).unwrap() - 5.8).abs() < 1e-12);
        assert!(p_of_a_omega(-0.5, 0.5).is_err());
        assert!(p_of_a_omega(0.0, 0.3).unwrap().is_infinite());
        let mut rng = crate::sampling::rng(11);
        for _ in 0..100 {
            let a: f64 = rand::Rng::gen_range(&mut rng, -0.59..10.0);
            let lo = (-5.0 * a / 3.0).max(0.0);
            let w: f64 = rand::Rng::gen_range(&mut rng, lo..=1.0);
            if a == 0.0 {
                continue;
            }
            let (x, y) = (p_of_a_omega(a, w).unwrap(), p_factored(a, w));
            assert!((x - y).abs() <= 1e-10 * y, "{a} {w}: {x} vs {y}");
        }
    }

    #[test]
    fn closed_form_values() {
        assert!((p_of_a(0.5).unwrap().p - 14.2).abs() < 1e-12);
        let b1 = first_breakpoint();
        assert!((1.0 + 3.0 / b1 + 0.5 - 3.081_138_830_084_19).abs() < 1e-12);
        let left = 1.0 + 3.0 / b1 + 9.0 / (5.0 * b1 * b1);
        let right = 1.0 + (3.0 + 5.0 * b1) / (2.0 * 10f64.sqrt() * b1 - 6.0);
        assert!((left - right).abs() < 1e-10);
        let b2 = second_breakpoint();
        let left = 1.0 + (3.0 + 5.0 * b2) / (2.0 * 10f64.sqrt() * b2 - 6.0);
        let right = 1.0 + (3.0 + (9.0 + 6.0 * b2).sqrt()) / (2.0 * b2);
        assert!((left - right).abs() < 1e-10 && (left - 2.5812).abs() < 1e-4);
        assert!(p_of_a(-0.6).is_err());
        assert_eq!(p_of_a(0.0).unwrap().branch, Branch::Zero);
        assert!((s_of_a(0.5).unwrap() - 2.0 / 27.4).abs() < 1e-14);
    }

    #[test]
    fn oracle_agrees() {
        for a in [0.5, 2.0, 5.0, -0.3, 1.9, 2.5] {
            let p = p_of_a(a).unwrap().p;
            let o = p_sup_oracle(a, 100_000).unwrap();
            assert!((p - o).abs() <= 1e-8, "{a}: {p} vs {o}");
        }
        assert_eq!(p_of_a(2.0).unwrap().branch, Branch::Two);
        assert_eq!(p_of_a(5.0).unwrap().branch, Branch::Three);
    }

    #[test]
    fn dimension_bounds() {
        let sa = s_of_a(0.5).unwrap();
        assert_eq!(dim_bound_basic(sa, 0.5).unwrap(), DimensionBound::Bound(0.0));
        assert!((dim_bound_basic(sa / 2.0, 0.5).unwrap().value().unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(dim_bound_basic(sa * 1.01, 0.5).unwrap(), DimensionBound::Empty);
        let improved = dim_bound_improved_power(0.05, 0.5).unwrap().value().unwrap();
        let basic = dim_bound_basic(0.05, 0.5).unwrap().value().unwrap();
        assert!(improved <= basic + 1e-12);
        let s5 = s_of_a(5.0).unwrap();
        assert!(dim_bound_improved_power(s5, 5.0).unwrap().value().unwrap().abs() < 1e-12);

        for a in [0.5, 5.0] {
            let p = p_of_a(a).unwrap().p;
            let expected = if p <= 2.0 { 3.0 - (6.0 * p - 3.0) / (2.0 * p + 2.0) } else { 3.0 - (2.0 * p - 1.0) / p };
            assert!((dim_bound_improved_log(0.5, 0.5, a).unwrap() - expected).abs() < 1e-12);
            assert!(dim_bound_improved_log(0.5, 1e12, a).unwrap() > 3.0 - 1e-9);
        }
    }

    #[test]
    fn lambdas_and_coercivity() {
        assert!((lambda_s(1.0, 1.0, 1.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((lambda_s(1.0, 2.0, 1.0).unwrap() - 4.0).abs() < 1e-15);
        assert!((lambda_0(0.5, 1.0, 1.0).unwrap() - std::f64::consts::E).abs() < 1e-15);
        assert!(coercivity_check(1.0, 0.0, 0.0).coercive);
        let c = coercivity_check(1.0, -0.6, 0.0);
        assert!(!c.coercive && c.margins[2].abs() < 1e-15);
        let c = coercivity_check(1.0, 1.0, 3.0);
        assert!(!c.coercive && c.margins[1] < 0.0);
    }
}
