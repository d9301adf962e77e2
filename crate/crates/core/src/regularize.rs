//! Globally finite convex approximations `f^ε` of a singular potential.
//!
//! Two constructions are available:
//!
//! * `Moreau`: the envelope `inf_{Q'} f(Q') + |Q - Q'|²/2ε`, which is C¹ with
//!   gradient `(Q - prox(Q))/ε`.
//! * `Tangent`: the supremum `F` of the tangent planes of `f` over the
//!   sublevel set `{f < 1/ε}`, mollified at radius `ε/ω_ε` and shifted down
//!   by `ε`, so that `F - 2ε ≤ f^ε ≤ F`.
//!
//! Both reduce to the eigenvalues of `Q` because the potentials are isotropic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::bm::{self, SphereQuadrature};
use crate::potentials::{soft_min, Family, Potential, PotentialSpec};
use crate::qtensor::{self, QTensor, Region, LAMBDA_MIN, MAX_DISTANCE, SQRT6};

const MOLLIFIER_NODES: usize = 4096;
const LEVEL_CURVE_POINTS: usize = 1024;
/// Mollification radii below this are treated as underflow.
const MIN_RADIUS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Tangent,
    #[default]
    Moreau,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizedSpec {
    #[serde(flatten)]
    pub base: PotentialSpec,
    pub epsilon: f64,
    #[serde(default)]
    pub method: Method,
}

impl RegularizedSpec {
    pub fn build(&self) -> Result<RegularizedPotential> {
        RegularizedPotential::new(&self.base.compile()?, self.epsilon, self.method)
    }
}

/// Level curve `{f = 1/ε}` of Ball–Majumdar in multiplier space, restricted
/// to ascending multipliers.
#[derive(Clone, Debug)]
struct LevelCurve {
    /// Ascending multipliers and `ln Z` at each point.
    points: Vec<([f64; 3], f64)>,
}

impl LevelCurve {
    fn build(quad: &SphereQuadrature, level: f64) -> Result<Self> {
        let u0 = [-2.0 / SQRT6, 1.0 / SQRT6, 1.0 / SQRT6];
        let u1 = [0.0, -1.0 / std::f64::consts::SQRT_2, 1.0 / std::f64::consts::SQRT_2];
        let mut points = Vec::with_capacity(LEVEL_CURVE_POINTS);
        for j in 0..LEVEL_CURVE_POINTS {
            let theta = std::f64::consts::FRAC_PI_3 * j as f64 / (LEVEL_CURVE_POINTS - 1) as f64;
            let v: [f64; 3] = std::array::from_fn(|i| theta.cos() * u0[i] + theta.sin() * u1[i]);
            let at = |r: f64| {
                let mu = v.map(|x| r * x);
                let m = quad.moments(mu);
                (m.entropy(&mu), m.ln_z)
            };
            let mut hi = 1.0;
            while at(hi).0 < level {
                hi *= 2.0;
                if hi > 1e12 {
                    return Err(Error::Domain(format!("level {level} not reached along direction {v:?}")));
                }
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if at(mid).0 < level {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let mu = v.map(|x| lo * x);
            points.push((mu, at(lo).1));
        }
        Ok(LevelCurve { points })
    }

    /// `max_j μ_j·λ - ln Z_j` and the maximizing multipliers.
    fn sup(&self, lambdas: &[f64; 3]) -> (f64, [f64; 3]) {
        let mut best = (f64::NEG_INFINITY, [0.0; 3]);
        for (mu, ln_z) in &self.points {
            let v = mu[0] * lambdas[0] + mu[1] * lambdas[1] + mu[2] * lambdas[2] - ln_z;
            if v > best.0 {
                best = (v, *mu);
            }
        }
        best
    }

    fn max_norm(&self) -> f64 {
        self.points.iter().map(|(mu, _)| (mu[0] * mu[0] + mu[1] * mu[1] + mu[2] * mu[2]).sqrt()).fold(0.0, f64::max)
    }
}

/// Antithetic quasi-Monte Carlo rule for a radial bump on the unit ball of
/// the coefficient space.
#[derive(Clone, Debug)]
struct Mollifier {
    nodes: Vec<(QTensor, f64)>,
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

impl Mollifier {
    fn new() -> Self {
        const PRIMES: [u64; 5] = [2, 3, 5, 7, 11];
        let mut nodes = Vec::with_capacity(MOLLIFIER_NODES);
        let mut i = 1u64;
        while nodes.len() < MOLLIFIER_NODES {
            let x: [f64; 5] = std::array::from_fn(|k| 2.0 * radical_inverse(i, PRIMES[k]) - 1.0);
            i += 1;
            let r2: f64 = x.iter().map(|v| v * v).sum();
            if r2 >= 1.0 {
                continue;
            }
            let w = (-1.0 / (1.0 - r2)).exp();
            let q = QTensor::new(x);
            nodes.push((q, w));
            nodes.push((-q, w));
        }
        let total: f64 = nodes.iter().map(|n| n.1).sum();
        nodes.iter_mut().for_each(|n| n.1 /= total);
        Mollifier { nodes }
    }
}

#[derive(Clone, Debug)]
pub struct RegularizedPotential {
    base: Potential,
    epsilon: f64,
    method: Method,
    d_eps: f64,
    omega: f64,
    radius: f64,
    underflow: bool,
    curve: Option<LevelCurve>,
    mollifier: Option<Mollifier>,
}

/// Result of one envelope evaluation, with the Ball–Majumdar multipliers for
/// warm starts.
#[derive(Clone, Copy, Debug)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: QTensor,
    /// Ascending-order dual multipliers (Ball–Majumdar Moreau only).
    pub multipliers: Option<[f64; 3]>,
}

impl RegularizedPotential {
    pub fn new(base: &Potential, epsilon: f64, method: Method) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
        }
        let f0 = base.value(&QTensor::ZERO)?;
        if f0 >= 1.0 / epsilon {
            return Err(Error::Domain(format!(
                "epsilon {epsilon} too large: the sublevel set {{f < {}}} is empty (f(0) = {f0})",
                1.0 / epsilon
            )));
        }
        let d_eps = threshold_on_prolate_ray(base, 1.0 / epsilon)?;
        let mut reg = RegularizedPotential {
            base: base.clone(),
            epsilon,
            method,
            d_eps,
            omega: f64::NAN,
            radius: f64::NAN,
            underflow: false,
            curve: None,
            mollifier: None,
        };
        if method == Method::Tangent {
            let sup_grad = match base.quadrature() {
                Some(quad) => {
                    let curve = LevelCurve::build(quad, 1.0 / epsilon - base.offset())?;
                    let m = curve.max_norm();
                    reg.curve = Some(curve);
                    m
                }
                None => base.profile_derivative(d_eps).abs(),
            };
            reg.omega = 1.1 * sup_grad;
            reg.radius = epsilon / reg.omega;
            reg.underflow = !(reg.radius >= MIN_RADIUS);
            if !reg.underflow {
                reg.mollifier = Some(Mollifier::new());
            }
        }
        Ok(reg)
    }

    pub fn base(&self) -> &Potential {
        &self.base
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Distance `d_ε` at which `f = 1/ε` on the prolate uniaxial ray; for the
    /// radial families the sublevel set is exactly `{d > d_ε}`.
    pub fn sublevel_threshold(&self) -> f64 {
        self.d_eps
    }

    /// Lipschitz constant `ω_ε` of the tangent envelope (with safety factor).
    pub fn lipschitz_constant(&self) -> f64 {
        self.omega
    }

    /// Lipschitz bound for the gradient of the regularized potential.
    pub fn gradient_lipschitz(&self) -> f64 {
        match self.method {
            Method::Moreau => 1.0 / self.epsilon,
            Method::Tangent => self.omega / self.radius,
        }
    }

    pub fn mollifier_radius(&self) -> f64 {
        self.radius
    }

    /// True when the mollification radius underflowed and the tangent
    /// envelope is used unmollified.
    pub fn mollification_underflow(&self) -> bool {
        self.underflow
    }

    /// Supremum of tangent planes over the sublevel set, with its gradient.
    pub fn tangent_envelope_with_gradient(&self, q: &QTensor) -> Result<(f64, QTensor)> {
        if !q.is_finite() {
            return Err(Error::InvalidInput("non-finite tensor".into()));
        }
        let s = qtensor::eigen(q)?;
        let l = s.lambdas;
        if let Some(curve) = &self.curve {
            let interior = qtensor::classify_spectrum(&l, 0.0) == Region::Interior;
            if interior {
                let quad = self.base.quadrature().expect("Ball–Majumdar quadrature");
                let sol = quad.solve_dual(l, 0.0, None)?;
                let f = sol.value + self.base.offset();
                if f < 1.0 / self.epsilon {
                    return Ok((f, QTensor::from_eigen(&sol.mu, &s.frame)));
                }
            }
            let (v, mu) = curve.sup(&l);
            return Ok((v + self.base.offset(), QTensor::from_eigen(&mu, &s.frame)));
        }
        let tau = self.base.spec().smoothing_tau;
        let (lt, w) = soft_min(&l, tau);
        let l_eps = LAMBDA_MIN + 2.0 * self.d_eps / SQRT6;
        let star = lt.max(l_eps);
        let d_star = 0.5 * SQRT6 * (star - LAMBDA_MIN);
        let slope = self.base.profile_derivative(d_star) * 0.5 * SQRT6;
        let value = self.base.profile(d_star) + slope * (lt - star);
        let g = w.map(|wi| slope * (wi - 1.0 / 3.0));
        Ok((value, QTensor::from_eigen(&g, &s.frame)))
    }

    pub fn tangent_envelope(&self, q: &QTensor) -> Result<f64> {
        Ok(self.tangent_envelope_with_gradient(q)?.0)
    }

    fn mollified(&self, q: &QTensor) -> Result<(f64, QTensor)> {
        match &self.mollifier {
            None => {
                let (v, g) = self.tangent_envelope_with_gradient(q)?;
                Ok((v - self.epsilon, g))
            }
            Some(m) => {
                let mut value = 0.0;
                let mut grad = QTensor::ZERO;
                for (node, w) in &m.nodes {
                    let (v, g) = self.tangent_envelope_with_gradient(&(*q - self.radius * *node))?;
                    value += w * v;
                    grad += *w * g;
                }
                Ok((value - self.epsilon, grad))
            }
        }
    }

    /// `f^ε(Q)`, finite for every finite `Q`.
    pub fn value_eps(&self, q: &QTensor) -> Result<f64> {
        Ok(self.evaluate(q, None)?.value)
    }

    pub fn gradient_eps(&self, q: &QTensor) -> Result<QTensor> {
        Ok(self.evaluate(q, None)?.gradient)
    }

    /// Value and gradient of `f^ε`. `warm` seeds the Ball–Majumdar dual
    /// iteration with multipliers from a previous evaluation.
    pub fn evaluate(&self, q: &QTensor, warm: Option<[f64; 3]>) -> Result<Evaluation> {
        if !q.is_finite() {
            return Err(Error::InvalidInput("non-finite tensor".into()));
        }
        if self.method == Method::Tangent {
            let (value, gradient) = self.mollified(q)?;
            return Ok(Evaluation { value, gradient, multipliers: None });
        }
        let s = qtensor::eigen(q)?;
        let l = s.lambdas;
        if let Some(quad) = self.base.quadrature() {
            let sol = quad.solve_dual(l, self.epsilon, warm)?;
            return Ok(Evaluation {
                value: sol.value + self.base.offset(),
                gradient: QTensor::from_eigen(&sol.mu, &s.frame),
                multipliers: Some(sol.mu),
            });
        }
        let (value, prox) =
            if self.base.spec().smoothing_tau > 0.0 { self.moreau_smoothed(&l)? } else { self.moreau_exact(&l) };
        let g: [f64; 3] = std::array::from_fn(|i| (l[i] - prox[i]) / self.epsilon);
        Ok(Evaluation { value, gradient: QTensor::from_eigen(&g, &s.frame), multipliers: None })
    }

    /// `G(ℓ)`, the potential as a function of the (soft) smallest eigenvalue,
    /// with first and second derivatives.
    fn eigen_profile(&self, l: f64) -> (f64, f64, f64) {
        let d = 0.5 * SQRT6 * (l - LAMBDA_MIN);
        let c = 0.5 * SQRT6;
        let second = match self.base.family() {
            Family::InversePower { s, m } => s * (s + 1.0) * m * d.powf(-s - 2.0),
            Family::Logarithmic { k, .. } => k / (d * d),
            Family::BallMajumdar { .. } => f64::NAN,
        };
        (self.base.profile(d), c * self.base.profile_derivative(d), c * c * second)
    }

    /// Moreau envelope for the exact smallest eigenvalue: minimize over the
    /// prescribed minimum `μ` of the prox eigenvalues, which are the
    /// water-filling projection of `λ` onto `{λ' ≥ μ, Σλ' = 0}`.
    fn moreau_exact(&self, l: &[f64; 3]) -> (f64, [f64; 3]) {
        let eps = self.epsilon;
        let slope = |mu: f64| -> f64 {
            if mu <= LAMBDA_MIN {
                return f64::NEG_INFINITY;
            }
            let (_, c, k) = water_fill(l, mu);
            let pull: f64 = (0..k).map(|i| mu - l[i] - c).sum();
            self.eigen_profile(mu).1 + pull / eps
        };
        let (mut lo, mut hi) = (l[0].max(LAMBDA_MIN), 0.0f64);
        let mu = if slope(hi) <= 0.0 {
            hi
        } else {
            for _ in 0..300 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if slope(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hi
        };
        let (p, _, _) = water_fill(l, mu);
        let dist2: f64 = (0..3).map(|i| (l[i] - p[i]).powi(2)).sum();
        (self.eigen_profile(mu).0 + dist2 / (2.0 * eps), p)
    }

    /// Moreau envelope for the soft-min family: damped Newton on the two
    /// traceless eigenvalue coordinates of the prox point.
    fn moreau_smoothed(&self, l: &[f64; 3]) -> Result<(f64, [f64; 3])> {
        let eps = self.epsilon;
        let tau = self.base.spec().smoothing_tau;
        let x0 = bm::to_coords(l);
        let objective = |x: &[f64; 2]| -> f64 {
            let p = bm::from_coords(x);
            let (lt, _) = soft_min(&p, tau);
            if lt <= LAMBDA_MIN {
                return f64::INFINITY;
            }
            let dx = [x[0] - x0[0], x[1] - x0[1]];
            self.eigen_profile(lt).0 + (dx[0] * dx[0] + dx[1] * dx[1]) / (2.0 * eps)
        };
        let mut x = if objective(&x0).is_finite() { x0 } else { [0.0, 0.0] };
        let mut fx = objective(&x);
        for _ in 0..200 {
            let p = bm::from_coords(&x);
            let (lt, w) = soft_min(&p, tau);
            let (_, g1, g2) = self.eigen_profile(lt);
            let cw = bm::to_coords(&w);
            let grad = [g1 * cw[0] + (x[0] - x0[0]) / eps, g1 * cw[1] + (x[1] - x0[1]) / eps];
            // Hessian of the soft-min: -(diag w - w wᵀ)/τ, projected.
            let basis =
                [bm::to_coords(&[1.0, 0.0, 0.0]), bm::to_coords(&[0.0, 1.0, 0.0]), bm::to_coords(&[0.0, 0.0, 1.0])];
            let mut h = [[0.0; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    let mut cov = 0.0;
                    for i in 0..3 {
                        cov += w[i] * basis[i][a] * basis[i][b];
                    }
                    cov -= cw[a] * cw[b];
                    h[a][b] = g2 * cw[a] * cw[b] - g1 * cov / tau;
                }
                h[a][a] += 1.0 / eps;
            }
            let gn = (grad[0] * grad[0] + grad[1] * grad[1]).sqrt();
            if gn <= 1e-13 * (1.0 + g1.abs()) {
                break;
            }
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            let step = [-(h[1][1] * grad[0] - h[0][1] * grad[1]) / det, -(h[0][0] * grad[1] - h[1][0] * grad[0]) / det];
            let slope = grad[0] * step[0] + grad[1] * step[1];
            let mut t = 1.0;
            loop {
                let xn = [x[0] + t * step[0], x[1] + t * step[1]];
                let fnew = objective(&xn);
                if fnew <= fx + 1e-4 * t * slope || (fnew.is_finite() && slope.abs() < 1e-28) {
                    x = xn;
                    fx = fnew;
                    break;
                }
                t *= 0.5;
                if t < 1e-30 {
                    return Ok((fx, bm::from_coords(&x)));
                }
            }
        }
        Ok((fx, bm::from_coords(&x)))
    }
}

/// Projection of ascending `l` onto `{λ' : λ'_i ≥ mu, Σλ' = 0}` (`mu ≤ 0`):
/// `λ'_i = max(l_i + c, mu)`. Returns the projection, the shift `c` and the
/// number of clamped entries.
pub fn water_fill(l: &[f64; 3], mu: f64) -> ([f64; 3], f64, usize) {
    if l[0] >= mu {
        return (*l, 0.0, 0);
    }
    let c1 = -(mu + l[1] + l[2]) / 2.0;
    if l[1] + c1 >= mu {
        return ([mu, l[1] + c1, l[2] + c1], c1, 1);
    }
    let c2 = -(2.0 * mu + l[2]);
    ([mu, mu, l[2] + c2], c2, 2)
}

/// Distance at which the potential equals `level` on the prolate ray
/// `S(e3⊗e3 - I/3)`, `S ∈ [0, 1)`, where `d = (√6/6)(1 - S)`.
fn threshold_on_prolate_ray(base: &Potential, level: f64) -> Result<f64> {
    if base.is_radial() {
        let d = base.profile_inverse(level);
        return Ok(d.min(MAX_DISTANCE));
    }
    let at = |s: f64| base.value(&QTensor::uniaxial(s, &[0.0, 0.0, 1.0]));
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if at(mid)? < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(MAX_DISTANCE * (1.0 - lo))
}
