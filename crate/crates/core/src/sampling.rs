//! Seeded random tensors, rotations and boundary points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{self, Mat3, Vec3};
use crate::qtensor::{QTensor, SQRT6};

pub type SampleRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal variate (Box–Muller).
pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Haar-distributed rotation.
pub fn random_rotation<R: Rng>(rng: &mut R) -> Mat3 {
    let q = [normal(rng), normal(rng), normal(rng), normal(rng)];
    linalg::rotation_from_quaternion(q)
}

/// Rotation vector of a Haar-distributed rotation (angle in `[0, π]`).
pub fn random_rotation_vector<R: Rng>(rng: &mut R) -> Vec3 {
    let mut q = [normal(rng), normal(rng), normal(rng), normal(rng)];
    if q[0] < 0.0 {
        q.iter_mut().for_each(|x| *x = -*x);
    }
    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let w = q[0] / n;
    let v = [q[1] / n, q[2] / n, q[3] / n];
    let s = linalg::norm(&v);
    if s < 1e-300 {
        return [0.0; 3];
    }
    let angle = 2.0 * s.atan2(w);
    linalg::scale(&v, angle / s)
}

pub fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
    linalg::normalize(&[normal(rng), normal(rng), normal(rng)])
}

/// Random traceless symmetric tensor with i.i.d. standard normal coefficients.
pub fn random_tensor<R: Rng>(rng: &mut R) -> QTensor {
    QTensor::new([normal(rng), normal(rng), normal(rng), normal(rng), normal(rng)])
}

/// Uniform point in the eigenvalue triangle, randomly rotated.
///
/// Eigenvalues are `w - 1/3` with `w` uniform on the probability simplex, so
/// the sample is strictly interior with probability one.
pub fn random_interior<R: Rng>(rng: &mut R) -> QTensor {
    let e: [f64; 3] = [-(1.0 - rng.gen::<f64>()).ln(), -(1.0 - rng.gen::<f64>()).ln(), -(1.0 - rng.gen::<f64>()).ln()];
    let s = e[0] + e[1] + e[2];
    let l = [e[0] / s - 1.0 / 3.0, e[1] / s - 1.0 / 3.0, e[2] / s - 1.0 / 3.0];
    QTensor::diag(l[0], l[1], l[2]).rotate(&random_rotation(rng))
}

/// Random interior tensor whose distance to the obstacle is exactly `d`
/// (`0 ≤ d ≤ √6/6`).
pub fn interior_at_distance<R: Rng>(rng: &mut R, d: f64) -> QTensor {
    let t = 2.0 * d / SQRT6;
    let u: f64 = rng.gen();
    let w = [t, t + (1.0 - 3.0 * t) * u, t + (1.0 - 3.0 * t) * (1.0 - u)];
    QTensor::diag(w[0] - 1.0 / 3.0, w[1] - 1.0 / 3.0, w[2] - 1.0 / 3.0).rotate(&random_rotation(rng))
}

/// Log-uniform distance in `[d_min, √6/6]`.
pub fn log_uniform_distance<R: Rng>(rng: &mut R, d_min: f64) -> f64 {
    let (lo, hi) = (d_min.ln(), (SQRT6 / 6.0).ln());
    (lo + (hi - lo) * rng.gen::<f64>()).exp()
}

/// Random boundary point `R diag(-1/3, t, 1/3 - t) Rᵀ`.
pub fn random_boundary<R: Rng>(rng: &mut R) -> QTensor {
    let t = rng.gen_range(-1.0 / 3.0..=1.0 / 3.0);
    crate::qtensor::boundary_point(t, &random_rotation(rng))
}
