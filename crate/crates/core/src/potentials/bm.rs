//! Ball–Majumdar bulk potential: the relative entropy of the closest
//! orientation density on the sphere with prescribed second moment `Q`.
//!
//! The value is the concave dual problem
//!
//! ```text
//! f(Q) = sup_Λ  Λ:Q - ln Z(Λ) - (ε/2)|Λ|²,    Z(Λ) = ∫_{S²} exp(Λ:(m⊗m - I/3)) dσ(m)
//! ```
//!
//! with `ε = 0` for the potential itself and `ε > 0` for its Moreau envelope
//! (infimal convolution with `|·|²/2ε`). The maximizer commutes with `Q`, so
//! the problem is solved for the diagonal of `Λ` in the eigenframe of `Q`
//! with a damped Newton iteration on two coordinates.
//!
//! The sphere integral uses a polar axis along the direction with the most
//! negative multiplier. The polar coordinate is integrated by Gauss–Legendre
//! on a window scaled to the concentration width `1/√α`; the azimuth either in
//! closed form through `e^{-u} I0(u)` and `e^{-u} I1(u)`, or by a uniform
//! trapezoid rule when an azimuthal node count is configured.

use crate::error::{Error, Result};
use crate::special;

const SQRT2: f64 = std::f64::consts::SQRT_2;
const SQRT6: f64 = 2.449_489_742_783_178;
/// Orthonormal basis of traceless diagonals.
const E_A: [f64; 3] = [1.0 / SQRT2, -1.0 / SQRT2, 0.0];
const E_B: [f64; 3] = [-1.0 / SQRT6, -1.0 / SQRT6, 2.0 / SQRT6];
/// Half-width of the polar window in units of the concentration width.
const WINDOW_SIGMAS: f64 = 9.0;

pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITERS: usize = 100;

/// Second moments of the orientation density `exp(Σ μ_i m_i²)/Z`.
#[derive(Clone, Copy, Debug)]
pub struct Moments {
    pub ln_z: f64,
    /// Index of the largest multiplier and `ln Z - μ_max`, which stay
    /// accurate when the multipliers are huge.
    pub reference: usize,
    pub ln_z_shifted: f64,
    /// `E[m_i²]`.
    pub first: [f64; 3],
    /// `E[m_i² m_j²]`.
    pub second: [[f64; 3]; 3],
}

#[derive(Clone, Debug)]
pub struct SphereQuadrature {
    /// Gauss–Legendre nodes and weights on `[0, 1]`.
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `None` integrates the azimuth exactly.
    azimuth: Option<Vec<f64>>,
}

impl SphereQuadrature {
    pub fn new(polar: usize, azimuth: Option<usize>) -> Self {
        let (x, w) = special::gauss_legendre(polar);
        let nodes = x.iter().map(|x| 0.5 * (x + 1.0)).collect();
        let weights = w.iter().map(|w| 0.5 * w).collect();
        let azimuth =
            azimuth.map(|m| (0..m).map(|l| (std::f64::consts::PI * l as f64 / m as f64).cos().powi(2)).collect());
        SphereQuadrature { nodes, weights, azimuth }
    }

    /// Moments for multipliers `μ` (any order; only differences matter).
    pub fn moments(&self, mu: [f64; 3]) -> Moments {
        // Polar axis p: smallest multiplier; reference r: largest of the rest.
        let p = (0..3).min_by(|&a, &b| mu[a].total_cmp(&mu[b])).unwrap();
        let (o1, o2) = ((p + 1) % 3, (p + 2) % 3);
        let (r, j) = if mu[o1] >= mu[o2] { (o1, o2) } else { (o2, o1) };
        let alpha = mu[r] - mu[p];
        let beta = mu[r] - mu[j];

        let window = if alpha > WINDOW_SIGMAS * WINDOW_SIGMAS { WINDOW_SIGMAS / alpha.sqrt() } else { 1.0 };
        let (mut z, mut sp, mut sj, mut spp, mut spj, mut sjj) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let t = window * x;
            let t2 = t * t;
            let s2 = 1.0 - t2;
            let weight = window * w * (-alpha * t2).exp();
            let (k0, k1, k2) = self.azimuthal(beta * s2);
            z += weight * k0;
            sp += weight * t2 * k0;
            sj += weight * s2 * k1;
            spp += weight * t2 * t2 * k0;
            spj += weight * t2 * s2 * k1;
            sjj += weight * s2 * s2 * k2;
        }
        let (ep, ej) = (sp / z, sj / z);
        let er = 1.0 - ep - ej;
        let (epp, epj, ejj) = (spp / z, spj / z, sjj / z);
        let erp = ep - epp - epj;
        let erj = ej - epj - ejj;
        let err = er - erp - erj;

        let mut first = [0.0; 3];
        first[p] = ep;
        first[j] = ej;
        first[r] = er;
        let mut second = [[0.0; 3]; 3];
        let mut set = |a: usize, b: usize, v: f64| {
            second[a][b] = v;
            second[b][a] = v;
        };
        set(p, p, epp);
        set(p, j, epj);
        set(j, j, ejj);
        set(r, p, erp);
        set(r, j, erj);
        set(r, r, err);
        Moments { ln_z: mu[r] + z.ln(), reference: r, ln_z_shifted: z.ln(), first, second }
    }

    /// Azimuthal averages of `c^k exp(-b c)`, `c = cos²φ`, for `k = 0, 1, 2`.
    #[inline]
    fn azimuthal(&self, b: f64) -> (f64, f64, f64) {
        match &self.azimuth {
            None => {
                let u = 0.5 * b;
                let i0 = special::i0e(u);
                let i1 = special::i1e(u);
                let k1 = 0.5 * (i0 - i1);
                (i0, k1, k1 - 0.25 * special::i1e_over_x(u))
            }
            Some(c2) => {
                let (mut k0, mut k1, mut k2) = (0.0, 0.0, 0.0);
                for &c in c2 {
                    let e = (-b * c).exp();
                    k0 += e;
                    k1 += c * e;
                    k2 += c * c * e;
                }
                let n = c2.len() as f64;
                (k0 / n, k1 / n, k2 / n)
            }
        }
    }
}

impl Moments {
    /// `μ·E[m⊗m] - ln Z(μ)`: the entropy of the density with multipliers
    /// `μ`, i.e. the potential (without offset) at its second moment.
    pub fn entropy(&self, mu: &[f64; 3]) -> f64 {
        let r = mu[self.reference];
        (0..3).map(|i| (mu[i] - r) * self.first[i]).sum::<f64>() - self.ln_z_shifted
    }
}

/// Maximizer of the dual problem in the eigenframe of `Q`.
#[derive(Clone, Copy, Debug)]
pub struct DualSolution {
    /// Eigenvalues of the multiplier `Λ`, paired with the eigenvalues of `Q`.
    pub mu: [f64; 3],
    /// `Λ:Q - ln Z(Λ) - (ε/2)|Λ|²` at the maximizer.
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
}

pub(crate) fn to_coords(v: &[f64; 3]) -> [f64; 2] {
    [dot3(v, &E_A), dot3(v, &E_B)]
}

pub(crate) fn from_coords(x: &[f64; 2]) -> [f64; 3] {
    [x[0] * E_A[0] + x[1] * E_B[0], x[0] * E_A[1] + x[1] * E_B[1], x[0] * E_A[2] + x[1] * E_B[2]]
}

#[inline]
fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Asymptotically exact multiplier guess: a density squeezed in direction `i`
/// has `E[m_i²] ≈ 1/(2|μ_i - μ_max|)`.
fn initial_guess(lambdas: &[f64; 3], eps: f64) -> [f64; 2] {
    let raw = lambdas.map(|l| -0.5 / (l + 1.0 / 3.0).max(1e-12));
    let mean = (raw[0] + raw[1] + raw[2]) / 3.0;
    let mut x = to_coords(&[raw[0] - mean, raw[1] - mean, raw[2] - mean]);
    if eps > 0.0 {
        let cap = (dot3(lambdas, lambdas).sqrt() + 1.0) / eps;
        let n = (x[0] * x[0] + x[1] * x[1]).sqrt();
        if n > cap {
            x = [x[0] * cap / n, x[1] * cap / n];
        }
    }
    x
}

impl SphereQuadrature {
    /// Solves the dual problem for eigenvalues `lambdas` of `Q` (traceless).
    pub fn solve_dual(&self, lambdas: [f64; 3], eps: f64, warm: Option<[f64; 3]>) -> Result<DualSolution> {
        let q = to_coords(&lambdas);
        let mut x = match warm {
            Some(mu) => to_coords(&mu),
            None => initial_guess(&lambdas, eps),
        };
        // `Λ:Q - ln Z` rewritten as `Σ (λ_i + 1/3)(μ_i - μ_r) - (ln Z - μ_r)`,
        // which avoids cancelling terms of size |Λ| near the obstacle.
        let w = lambdas.map(|l| l + 1.0 / 3.0);
        let objective = |x: &[f64; 2], m: &Moments| {
            let mu = from_coords(x);
            let r = mu[m.reference];
            w[0] * (mu[0] - r) + w[1] * (mu[1] - r) + w[2] * (mu[2] - r)
                - m.ln_z_shifted
                - 0.5 * eps * (x[0] * x[0] + x[1] * x[1])
        };

        let mut m = self.moments(from_coords(&x));
        let mut phi = objective(&x, &m);
        if !phi.is_finite() {
            x = [0.0, 0.0];
            m = self.moments([0.0; 3]);
            phi = objective(&x, &m);
        }
        for it in 0..NEWTON_MAX_ITERS {
            let mean = to_coords(&m.first);
            let g = [q[0] - mean[0] - eps * x[0], q[1] - mean[1] - eps * x[1]];
            // Covariance of the features in the (E_A, E_B) coordinates.
            let mut cov = [[0.0; 2]; 2];
            let basis = [E_A, E_B];
            for u in 0..2 {
                for v in 0..2 {
                    let mut c = 0.0;
                    for i in 0..3 {
                        for k in 0..3 {
                            c += basis[u][i] * basis[v][k] * (m.second[i][k] - m.first[i] * m.first[k]);
                        }
                    }
                    cov[u][v] = c;
                }
            }
            cov[0][0] += eps;
            cov[1][1] += eps;
            let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
            let mut step = if det > 0.0 && det.is_finite() {
                [(cov[1][1] * g[0] - cov[0][1] * g[1]) / det, (cov[0][0] * g[1] - cov[1][0] * g[0]) / det]
            } else {
                g
            };
            let decrement = g[0] * step[0] + g[1] * step[1];
            let residual = (g[0] * g[0] + g[1] * g[1]).sqrt();
            // Far out the multipliers are O(1/d) and the gradient cannot be
            // resolved below a few ulps of |x| times the curvature.
            let floor = 4.0 * f64::EPSILON * (x[0].abs() + x[1].abs()) * (cov[0][0] + cov[1][1]);
            if residual <= NEWTON_TOL.max(floor) && decrement <= 1e-18f64.max(floor * floor) {
                return Ok(DualSolution { mu: from_coords(&x), value: phi, iterations: it, residual });
            }
            let mut t = 1.0;
            let (mut xn, mut mn, mut pn);
            loop {
                xn = [x[0] + t * step[0], x[1] + t * step[1]];
                mn = self.moments(from_coords(&xn));
                pn = objective(&xn, &mn);
                if decrement < 1e-12 || pn >= phi + 1e-4 * t * decrement {
                    break;
                }
                t *= 0.5;
                if t < 1e-20 {
                    // Fall back to steepest ascent once.
                    step = g;
                    t = 1e-3 / (1.0 + residual);
                    xn = [x[0] + t * step[0], x[1] + t * step[1]];
                    mn = self.moments(from_coords(&xn));
                    pn = objective(&xn, &mn);
                    break;
                }
            }
            x = xn;
            m = mn;
            phi = pn;
        }
        let mean = to_coords(&m.first);
        let g = [q[0] - mean[0] - eps * x[0], q[1] - mean[1] - eps * x[1]];
        Err(Error::Convergence {
            what: "Ball–Majumdar dual Newton",
            iterations: NEWTON_MAX_ITERS,
            residual: (g[0] * g[0] + g[1] * g[1]).sqrt(),
        })
    }
}
