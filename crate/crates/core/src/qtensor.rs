//! Traceless symmetric 3×3 tensors and the geometry of the physical set
//! `{Q : every eigenvalue of Q lies in [-1/3, 2/3]}`.
//!
//! A [`QTensor`] stores five coordinates with respect to the orthonormal basis
//!
//! ```text
//! B0 = (e1⊗e1 - e2⊗e2)/√2      B1 = (2 e3⊗e3 - e1⊗e1 - e2⊗e2)/√6
//! B2 = (e1⊗e2 + e2⊗e1)/√2      B3 = (e1⊗e3 + e3⊗e1)/√2
//! B4 = (e2⊗e3 + e3⊗e2)/√2
//! ```
//!
//! so the Frobenius inner product of two tensors is the dot product of their
//! coefficient vectors.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat3, Vec3};
use crate::optim;

pub const SQRT2: f64 = std::f64::consts::SQRT_2;
pub const SQRT6: f64 = 2.449_489_742_783_178;
/// Lower end of the admissible eigenvalue interval.
pub const LAMBDA_MIN: f64 = -1.0 / 3.0;
/// Upper end of the admissible eigenvalue interval.
pub const LAMBDA_MAX: f64 = 2.0 / 3.0;
/// Distance from the zero tensor to the obstacle, `√6/6`.
pub const MAX_DISTANCE: f64 = SQRT6 / 6.0;
/// Default tolerance for [`classify`].
pub const DEFAULT_TOL: f64 = 1e-9;
/// Eigenvalue gaps below this are treated as repeated roots.
pub const DEGENERACY_GAP: f64 = 1e-8;

/// A traceless symmetric 3×3 tensor in orthonormal coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QTensor {
    pub coeffs: [f64; 5],
}

impl QTensor {
    pub const ZERO: QTensor = QTensor { coeffs: [0.0; 5] };

    pub const fn new(coeffs: [f64; 5]) -> Self {
        QTensor { coeffs }
    }

    /// Orthogonal projection of an arbitrary 3×3 matrix onto the traceless
    /// symmetric subspace.
    pub fn from_matrix(m: &Mat3) -> Self {
        let s12 = 0.5 * (m[0][1] + m[1][0]);
        let s13 = 0.5 * (m[0][2] + m[2][0]);
        let s23 = 0.5 * (m[1][2] + m[2][1]);
        QTensor::new([
            (m[0][0] - m[1][1]) / SQRT2,
            (2.0 * m[2][2] - m[0][0] - m[1][1]) / SQRT6,
            SQRT2 * s12,
            SQRT2 * s13,
            SQRT2 * s23,
        ])
    }

    pub fn to_matrix(&self) -> Mat3 {
        let c = &self.coeffs;
        let a = c[0] / SQRT2;
        let b = c[1] / SQRT6;
        let m11 = a - b;
        let m22 = -a - b;
        let m33 = 2.0 * b;
        let m12 = c[2] / SQRT2;
        let m13 = c[3] / SQRT2;
        let m23 = c[4] / SQRT2;
        [[m11, m12, m13], [m12, m22, m23], [m13, m23, m33]]
    }

    /// `diag(a, b, c)` projected onto the traceless subspace.
    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        QTensor::from_matrix(&[[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]])
    }

    /// Uniaxial tensor `S (n⊗n - I/3)`; `n` is normalized first.
    pub fn uniaxial(s: f64, n: &Vec3) -> Self {
        let n = linalg::normalize(n);
        QTensor::from_matrix(&linalg::scale_mat(&linalg::outer(&n, &n), s))
    }

    /// `Σ λ_i f_i ⊗ f_i` for an orthonormal frame.
    pub fn from_eigen(lambdas: &[f64; 3], frame: &[Vec3; 3]) -> Self {
        let mut m = [[0.0; 3]; 3];
        for k in 0..3 {
            let f = &frame[k];
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += lambdas[k] * f[i] * f[j];
                }
            }
        }
        QTensor::from_matrix(&m)
    }

    pub fn dot(&self, other: &QTensor) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// `R Q Rᵀ`.
    pub fn rotate(&self, r: &Mat3) -> Self {
        let m = self.to_matrix();
        QTensor::from_matrix(&linalg::mat_mul(&linalg::mat_mul(r, &m), &linalg::transpose(r)))
    }

    /// Matrix entry `Q_ij`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.to_matrix()[i][j]
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }
}

impl Add for QTensor {
    type Output = QTensor;
    fn add(mut self, rhs: QTensor) -> QTensor {
        self += rhs;
        self
    }
}

impl AddAssign for QTensor {
    fn add_assign(&mut self, rhs: QTensor) {
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs) {
            *a += b;
        }
    }
}

impl Sub for QTensor {
    type Output = QTensor;
    fn sub(mut self, rhs: QTensor) -> QTensor {
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs) {
            *a -= b;
        }
        self
    }
}

impl Mul<QTensor> for f64 {
    type Output = QTensor;
    fn mul(self, mut rhs: QTensor) -> QTensor {
        for a in rhs.coeffs.iter_mut() {
            *a *= self;
        }
        rhs
    }
}

impl Mul<f64> for QTensor {
    type Output = QTensor;
    fn mul(self, rhs: f64) -> QTensor {
        rhs * self
    }
}

impl Neg for QTensor {
    type Output = QTensor;
    fn neg(self) -> QTensor {
        -1.0 * self
    }
}

/// Ascending eigenvalues with their orthonormal eigenvectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spectrum {
    pub lambdas: [f64; 3],
    pub frame: [Vec3; 3],
}

impl Spectrum {
    pub fn reconstruct(&self) -> QTensor {
        QTensor::from_eigen(&self.lambdas, &self.frame)
    }

    /// Smallest eigenvalue.
    pub fn min(&self) -> f64 {
        self.lambdas[0]
    }

    /// Gap between the two smallest eigenvalues.
    pub fn lower_gap(&self) -> f64 {
        self.lambdas[1] - self.lambdas[0]
    }
}

/// Position of a tensor relative to the physical set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Interior,
    Boundary,
    Outside,
}

/// Eigen-decomposition of a symmetric 3×3 matrix.
///
/// Eigenvalues come from the trigonometric solution of the characteristic
/// cubic. The eigenvector of the most isolated root is taken from the largest
/// cross product of rows of `A - λI`; the remaining pair is obtained by
/// deflation to the orthogonal complement and an exact 2×2 Jacobi rotation,
/// which stays accurate when the two roots coincide. Each eigenvector is
/// signed so that its first component with magnitude above `1e-12` is positive.
pub fn eigen_matrix(a: &Mat3) -> Result<Spectrum> {
    if a.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite matrix entry".into()));
    }
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    if p < 1e-300 {
        return Ok(Spectrum { lambdas: [q; 3], frame: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] });
    }
    let mut b = *a;
    for (i, row) in b.iter_mut().enumerate() {
        row[i] -= q;
        for x in row.iter_mut() {
            *x /= p;
        }
    }
    let r = (linalg::det(&b) / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
    let mid = 3.0 * q - hi - lo;

    // Most isolated root first.
    let isolated = if mid - lo >= hi - mid { lo } else { hi };
    let v = null_vector(a, isolated);
    let u = linalg::orthogonal_unit(&v);
    let w = linalg::cross(&v, &u);
    let au = linalg::mat_vec(a, &u);
    let aw = linalg::mat_vec(a, &w);
    let (a11, a12, a22) = (linalg::dot(&u, &au), linalg::dot(&u, &aw), linalg::dot(&w, &aw));
    let theta = 0.5 * (2.0 * a12).atan2(a11 - a22);
    let (s, c) = theta.sin_cos();
    let e1 = [c * u[0] + s * w[0], c * u[1] + s * w[1], c * u[2] + s * w[2]];
    let e2 = [-s * u[0] + c * w[0], -s * u[1] + c * w[1], -s * u[2] + c * w[2]];
    let l1 = c * c * a11 + 2.0 * s * c * a12 + s * s * a22;
    let l2 = s * s * a11 - 2.0 * s * c * a12 + c * c * a22;
    let lv = linalg::dot(&v, &linalg::mat_vec(a, &v));

    let mut pairs = [(lv, v), (l1, e1), (l2, e2)];
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut lambdas = [0.0; 3];
    let mut frame = [[0.0; 3]; 3];
    for (k, (l, vec)) in pairs.iter().enumerate() {
        lambdas[k] = *l;
        frame[k] = canonical_sign(vec);
    }
    Ok(Spectrum { lambdas, frame })
}

/// Unit vector spanning the kernel of `A - λI` for a simple root `λ`.
fn null_vector(a: &Mat3, lambda: f64) -> Vec3 {
    let mut m = *a;
    for (i, row) in m.iter_mut().enumerate() {
        row[i] -= lambda;
    }
    let candidates = [linalg::cross(&m[0], &m[1]), linalg::cross(&m[0], &m[2]), linalg::cross(&m[1], &m[2])];
    let best = candidates.iter().max_by(|x, y| linalg::dot(x, x).total_cmp(&linalg::dot(y, y))).unwrap();
    if linalg::dot(best, best) < 1e-300 {
        // Rank ≤ 1: any vector orthogonal to the nonzero row works.
        let row = m.iter().max_by(|x, y| linalg::dot(x, x).total_cmp(&linalg::dot(y, y))).unwrap();
        if linalg::dot(row, row) < 1e-300 {
            return [1.0, 0.0, 0.0];
        }
        return linalg::orthogonal_unit(&linalg::normalize(row));
    }
    linalg::normalize(best)
}

fn canonical_sign(v: &Vec3) -> Vec3 {
    for &c in v {
        if c.abs() > 1e-12 {
            return if c < 0.0 { linalg::scale(v, -1.0) } else { *v };
        }
    }
    *v
}

/// Spectrum of a Q-tensor.
pub fn eigen(q: &QTensor) -> Result<Spectrum> {
    if !q.is_finite() {
        return Err(Error::InvalidInput("non-finite Q-tensor coefficient".into()));
    }
    let mut s = eigen_matrix(&q.to_matrix())?;
    // Restore the exact trace constraint lost to rounding.
    let shift = (s.lambdas[0] + s.lambdas[1] + s.lambdas[2]) / 3.0;
    for l in s.lambdas.iter_mut() {
        *l -= shift;
    }
    Ok(s)
}

/// Region of `q` at classification tolerance `tol`.
pub fn classify(q: &QTensor, tol: f64) -> Result<Region> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be ≥ 0, got {tol}")));
    }
    Ok(classify_spectrum(&eigen(q)?.lambdas, tol))
}

pub fn classify_spectrum(l: &[f64; 3], tol: f64) -> Region {
    if l.iter().all(|&x| x > LAMBDA_MIN + tol && x < LAMBDA_MAX - tol) {
        Region::Interior
    } else if l.iter().all(|&x| x >= LAMBDA_MIN - tol && x <= LAMBDA_MAX + tol) && (l[0] - LAMBDA_MIN).abs() <= tol {
        Region::Boundary
    } else {
        Region::Outside
    }
}

/// `(√6/2)(λ1 + 1/3)`, clamped at zero, for a smallest eigenvalue `λ1`.
#[inline]
pub fn distance_from_min_eigenvalue(lambda1: f64) -> f64 {
    (0.5 * SQRT6 * (lambda1 - LAMBDA_MIN)).max(0.0)
}

fn require_not_outside(s: &Spectrum) -> Result<()> {
    if classify_spectrum(&s.lambdas, DEFAULT_TOL) == Region::Outside {
        return Err(Error::Domain(format!("tensor with eigenvalues {:?} lies outside the physical set", s.lambdas)));
    }
    Ok(())
}

/// Frobenius distance from `q` to the complement of the physical set.
pub fn distance(q: &QTensor) -> Result<f64> {
    let s = eigen(q)?;
    require_not_outside(&s)?;
    Ok(distance_from_min_eigenvalue(s.min()))
}

/// Closest point of the obstacle: the smallest eigenvalue is moved to `-1/3`
/// and the excess is shared equally by the other two, in the same frame.
pub fn nearest_obstacle_point(q: &QTensor) -> Result<QTensor> {
    let s = eigen(q)?;
    require_not_outside(&s)?;
    let [l1, l2, l3] = s.lambdas;
    let half = 0.5 * (l1 - LAMBDA_MIN);
    Ok(QTensor::from_eigen(&[LAMBDA_MIN, l2 + half, l3 + half], &s.frame))
}

/// A boundary point `R diag(-1/3, t, 1/3 - t) Rᵀ`.
pub fn boundary_point(t: f64, rotation: &Mat3) -> QTensor {
    QTensor::diag(LAMBDA_MIN, t, 1.0 / 3.0 - t).rotate(rotation)
}

/// Numerical distance from `q` to the obstacle by multi-start Nelder–Mead over
/// the boundary parametrization `(t, rotation vector)`, `t ∈ [-1/3, 1/3]`.
///
/// Independent of the closed form used by [`distance`]; used as its oracle.
pub fn brute_force_distance(q: &QTensor, restarts: usize, seed: u64) -> Result<f64> {
    if restarts == 0 {
        return Err(Error::InvalidInput("restarts must be ≥ 1".into()));
    }
    let s = eigen(q)?;
    require_not_outside(&s)?;
    let target = q.to_matrix();
    // u ↦ t maps the real line onto [-1/3, 1/3].
    let objective = |x: &[f64]| -> f64 {
        let t = LAMBDA_MIN + (1.0 - x[0].cos()) / 3.0;
        let r = linalg::rotation_from_vector(&[x[1], x[2], x[3]]);
        let p = boundary_point(t, &r).to_matrix();
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                acc += (target[i][j] - p[i][j]).powi(2);
            }
        }
        acc.sqrt()
    };
    let mut rng = crate::sampling::rng(seed);
    let mut best = f64::INFINITY;
    for _ in 0..restarts {
        let u: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let w = crate::sampling::random_rotation_vector(&mut rng);
        let mut x = vec![u, w[0], w[1], w[2]];
        let mut fx = f64::INFINITY;
        // Restarting the simplex at the incumbent guards against collapse.
        for _ in 0..4 {
            let r = optim::nelder_mead(&objective, &x, 0.3, 1e-14, 4000);
            let improved = r.value < fx - 1e-18;
            x = r.point;
            fx = r.value;
            if !improved {
                break;
            }
        }
        best = best.min(fx);
    }
    Ok(best)
}

/// `(2/3)|M|² - ‖M‖₂²`, nonnegative for every traceless symmetric `M`.
pub fn norm2_slack(m: &QTensor) -> f64 {
    let l = eigen(m).map(|s| s.lambdas).unwrap_or([f64::NAN; 3]);
    let spectral = l.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    2.0 / 3.0 * m.norm_sq() - spectral * spectral
}

/// `(5/3)(|M|² + |N|² + |P|²) - Σ_i (M_i1 + N_i2 + P_i3)²`, nonnegative for
/// traceless symmetric `M, N, P`.
pub fn div_slack(m: &QTensor, n: &QTensor, p: &QTensor) -> f64 {
    let (mm, nm, pm) = (m.to_matrix(), n.to_matrix(), p.to_matrix());
    let div: f64 = (0..3).map(|i| (mm[i][0] + nm[i][1] + pm[i][2]).powi(2)).sum();
    5.0 / 3.0 * (m.norm_sq() + n.norm_sq() + p.norm_sq()) - div
}

/// `|d(Q1) - d(Q2)| / |Q1 - Q2|`, or 0 when the tensors coincide.
pub fn lipschitz_witness(q1: &QTensor, q2: &QTensor) -> Result<f64> {
    let d1 = distance(q1)?;
    let d2 = distance(q2)?;
    let gap = (*q1 - *q2).norm();
    if gap == 0.0 {
        return Ok(0.0);
    }
    Ok((d1 - d2).abs() / gap)
}
