//! Singular bulk potentials that blow up on the obstacle.
//!
//! Three isotropic families are provided. The two distance-based families
//! depend on `Q` only through the smallest eigenvalue (or its soft-min when
//! `smoothing_tau > 0`); Ball–Majumdar depends on the full spectrum.

pub mod bm;
mod hypotheses;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qtensor::{self, QTensor, Region, Spectrum, DEGENERACY_GAP, LAMBDA_MIN, SQRT6};

pub use bm::{DualSolution, SphereQuadrature};
pub use hypotheses::{GrowthBounds, HypothesisReport, MidpointReport, Witness};

/// Soft-min temperature used for single cells whose smallest eigenvalue is
/// degenerate when the exact path cannot provide a gradient.
pub const FALLBACK_TAU: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `m · d(Q)^{-s}`.
    InversePower { s: f64, m: f64 },
    /// `-k ln d(Q) + c`.
    #[serde(rename = "log")]
    Logarithmic {
        k: f64,
        #[serde(default)]
        c: f64,
    },
    /// Relative entropy of the closest orientation density, plus `offset`.
    BallMajumdar {
        #[serde(default = "default_quad_polar")]
        quad_polar: usize,
        #[serde(default = "default_quad_azimuth")]
        quad_azimuth: usize,
        #[serde(default = "default_offset")]
        offset: f64,
        /// Integrate the azimuth in closed form; `quad_azimuth` is used only
        /// when this is false.
        #[serde(default = "default_true")]
        exact_azimuth: bool,
    },
}

fn default_quad_polar() -> usize {
    64
}
fn default_quad_azimuth() -> usize {
    128
}
fn default_offset() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

impl Family {
    pub fn ball_majumdar() -> Self {
        Family::BallMajumdar {
            quad_polar: default_quad_polar(),
            quad_azimuth: default_quad_azimuth(),
            offset: default_offset(),
            exact_azimuth: true,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::InversePower { .. } => "inverse_power",
            Family::Logarithmic { .. } => "log",
            Family::BallMajumdar { .. } => "ball_majumdar",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    #[serde(flatten)]
    pub family: Family,
    /// Soft-min temperature replacing `λ1`; `0` is the exact eigenvalue.
    /// Ignored by Ball–Majumdar, which is smooth already.
    #[serde(default)]
    pub smoothing_tau: f64,
}

impl PotentialSpec {
    pub fn new(family: Family) -> Self {
        PotentialSpec { family, smoothing_tau: 0.0 }
    }

    pub fn inverse_power(s: f64, m: f64) -> Self {
        Self::new(Family::InversePower { s, m })
    }

    pub fn logarithmic(k: f64, c: f64) -> Self {
        Self::new(Family::Logarithmic { k, c })
    }

    pub fn ball_majumdar() -> Self {
        Self::new(Family::ball_majumdar())
    }

    pub fn with_smoothing(mut self, tau: f64) -> Self {
        self.smoothing_tau = tau;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !(self.smoothing_tau >= 0.0 && self.smoothing_tau.is_finite()) {
            return bad(format!("smoothing_tau must be finite and ≥ 0, got {}", self.smoothing_tau));
        }
        match self.family {
            Family::InversePower { s, m } => {
                if !(s > 0.0 && s.is_finite() && m > 0.0 && m.is_finite()) {
                    return bad(format!("inverse_power needs s > 0 and m > 0, got s={s}, m={m}"));
                }
            }
            Family::Logarithmic { k, c } => {
                if !(k > 0.0 && k.is_finite() && c.is_finite()) {
                    return bad(format!("log needs k > 0 and finite c, got k={k}, c={c}"));
                }
            }
            Family::BallMajumdar { quad_polar, quad_azimuth, offset, .. } => {
                if quad_polar < 16 || quad_azimuth < 16 {
                    return bad(format!(
                        "ball_majumdar quadrature counts must be ≥ 16, got {quad_polar}×{quad_azimuth}"
                    ));
                }
                if !offset.is_finite() {
                    return bad(format!("ball_majumdar offset must be finite, got {offset}"));
                }
            }
        }
        Ok(())
    }

    /// Validates the spec and precomputes quadrature tables.
    pub fn compile(&self) -> Result<Potential> {
        self.validate()?;
        let quad = match self.family {
            Family::BallMajumdar { quad_polar, quad_azimuth, exact_azimuth, .. } => {
                Some(Arc::new(SphereQuadrature::new(quad_polar, (!exact_azimuth).then_some(quad_azimuth))))
            }
            _ => None,
        };
        Ok(Potential { spec: self.clone(), quad })
    }
}

/// A compiled potential, cheap to clone and safe to share across threads.
#[derive(Clone, Debug)]
pub struct Potential {
    spec: PotentialSpec,
    quad: Option<Arc<SphereQuadrature>>,
}

/// `(λ_τ, w)` with `λ_τ = λmin - τ ln Σ exp(-(λ_i - λmin)/τ)` and `w = ∂λ_τ/∂λ`.
pub fn soft_min(lambdas: &[f64; 3], tau: f64) -> (f64, [f64; 3]) {
    if tau <= 0.0 {
        return (lambdas[0], [1.0, 0.0, 0.0]);
    }
    let lo = lambdas[0].min(lambdas[1]).min(lambdas[2]);
    let e = lambdas.map(|l| (-(l - lo) / tau).exp());
    let z = e[0] + e[1] + e[2];
    (lo - tau * z.ln(), e.map(|x| x / z))
}

impl Potential {
    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn family(&self) -> &Family {
        &self.spec.family
    }

    /// True when the value depends on `Q` only through the (soft) smallest
    /// eigenvalue.
    pub fn is_radial(&self) -> bool {
        !matches!(self.spec.family, Family::BallMajumdar { .. })
    }

    pub fn quadrature(&self) -> Option<&SphereQuadrature> {
        self.quad.as_deref()
    }

    /// Additive constant of the Ball–Majumdar family (0 otherwise).
    pub fn offset(&self) -> f64 {
        match self.spec.family {
            Family::BallMajumdar { offset, .. } => offset,
            _ => 0.0,
        }
    }

    /// Value of a radial family as a function of the distance `d`.
    pub fn profile(&self, d: f64) -> f64 {
        if !(d > 0.0) {
            return f64::INFINITY;
        }
        match self.spec.family {
            Family::InversePower { s, m } => m * d.powf(-s),
            Family::Logarithmic { k, c } => -k * d.ln() + c,
            Family::BallMajumdar { .. } => f64::NAN,
        }
    }

    /// Derivative of [`Potential::profile`] in `d`.
    pub fn profile_derivative(&self, d: f64) -> f64 {
        match self.spec.family {
            Family::InversePower { s, m } => -s * m * d.powf(-s - 1.0),
            Family::Logarithmic { k, .. } => -k / d,
            Family::BallMajumdar { .. } => f64::NAN,
        }
    }

    /// Inverse of the profile: the distance at which a radial family takes
    /// the value `y`.
    pub fn profile_inverse(&self, y: f64) -> f64 {
        match self.spec.family {
            Family::InversePower { s, m } => (m / y).powf(1.0 / s),
            Family::Logarithmic { k, c } => ((c - y) / k).exp(),
            Family::BallMajumdar { .. } => f64::NAN,
        }
    }

    /// Effective distance used by the radial families: `d` of the soft-min
    /// eigenvalue, together with its eigenvalue weights.
    pub fn effective_distance(&self, lambdas: &[f64; 3]) -> (f64, [f64; 3]) {
        let (l, w) = soft_min(lambdas, self.spec.smoothing_tau);
        (0.5 * SQRT6 * (l - LAMBDA_MIN), w)
    }

    /// Value from ascending eigenvalues; `+∞` off the open physical set.
    pub fn value_spectrum(&self, lambdas: &[f64; 3]) -> Result<f64> {
        if qtensor::classify_spectrum(lambdas, 0.0) != Region::Interior {
            return Ok(f64::INFINITY);
        }
        match &self.quad {
            Some(quad) => Ok(quad.solve_dual(*lambdas, 0.0, None)?.value + self.offset()),
            None => Ok(self.profile(self.effective_distance(lambdas).0)),
        }
    }

    /// `f_b(Q)`; `+∞` unless `Q` is strictly inside the physical set.
    pub fn value(&self, q: &QTensor) -> Result<f64> {
        self.value_spectrum(&qtensor::eigen(q)?.lambdas)
    }

    /// The Ball–Majumdar value; an error for the other families.
    pub fn bm_value(&self, q: &QTensor) -> Result<f64> {
        if self.quad.is_none() {
            return Err(Error::InvalidInput(format!("{} is not the Ball–Majumdar family", self.spec.family.name())));
        }
        self.value(q)
    }

    /// Gradient eigenvalues `g` with `Df_b = Σ g_i n_i⊗n_i` in the frame of
    /// `spectrum` (`Σ g_i = 0`). `tau` overrides the spec's soft-min
    /// temperature when given.
    pub fn gradient_spectrum(&self, spectrum: &Spectrum, tau: Option<f64>) -> Result<[f64; 3]> {
        let l = &spectrum.lambdas;
        if qtensor::classify_spectrum(l, 0.0) != Region::Interior {
            return Err(Error::Domain(format!("gradient requested off the open physical set at {l:?}")));
        }
        if let Some(quad) = &self.quad {
            return Ok(quad.solve_dual(*l, 0.0, None)?.mu);
        }
        let tau = tau.unwrap_or(self.spec.smoothing_tau);
        if tau == 0.0 && spectrum.lower_gap() < DEGENERACY_GAP {
            return Err(Error::DegenerateEigenvalue { gap: spectrum.lower_gap() });
        }
        let (lt, w) = soft_min(l, tau);
        let d = 0.5 * SQRT6 * (lt - LAMBDA_MIN);
        if !(d > 0.0) {
            return Err(Error::Domain(format!("soft-min eigenvalue {lt} is on the obstacle")));
        }
        let scale = self.profile_derivative(d) * 0.5 * SQRT6;
        Ok(w.map(|wi| scale * (wi - 1.0 / 3.0)))
    }

    /// `Df_b(Q)` as a traceless tensor.
    pub fn gradient(&self, q: &QTensor) -> Result<QTensor> {
        if !q.is_finite() {
            return Err(Error::InvalidInput("non-finite tensor".into()));
        }
        let s = qtensor::eigen(q)?;
        let g = self.gradient_spectrum(&s, None)?;
        Ok(QTensor::from_eigen(&g, &s.frame))
    }

    /// Value and gradient from one eigen-decomposition.
    pub fn value_and_gradient(&self, q: &QTensor) -> Result<(f64, QTensor)> {
        let s = qtensor::eigen(q)?;
        if qtensor::classify_spectrum(&s.lambdas, 0.0) != Region::Interior {
            return Err(Error::Domain(format!("gradient requested off the open physical set at {:?}", s.lambdas)));
        }
        if let Some(quad) = &self.quad {
            let sol = quad.solve_dual(s.lambdas, 0.0, None)?;
            return Ok((sol.value + self.offset(), QTensor::from_eigen(&sol.mu, &s.frame)));
        }
        let g = self.gradient_spectrum(&s, None)?;
        Ok((self.value_spectrum(&s.lambdas)?, QTensor::from_eigen(&g, &s.frame)))
    }

    pub fn check_growth(&self, samples: usize, seed: u64) -> Result<HypothesisReport> {
        hypotheses::check_growth(self, samples, seed)
    }

    pub fn check_gradient_bound(&self, samples: usize, seed: u64) -> Result<HypothesisReport> {
        hypotheses::check_gradient_bound(self, samples, seed)
    }

    pub fn check_hessian_bound(&self, samples: usize, seed: u64) -> Result<HypothesisReport> {
        hypotheses::check_hessian_bound(self, samples, seed)
    }

    pub fn convexity_midpoint_check(&self, pairs: usize, seed: u64) -> Result<MidpointReport> {
        hypotheses::convexity_midpoint_check(self, pairs, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::sampling;

    fn fd_gradient(p: &Potential, q: &QTensor, h: f64) -> QTensor {
        let mut g = [0.0; 5];
        for (c, gc) in g.iter_mut().enumerate() {
            let mut e = [0.0; 5];
            e[c] = h;
            let e = QTensor::new(e);
            *gc = (p.value(&(*q + e)).unwrap() - p.value(&(*q - e)).unwrap()) / (2.0 * h);
        }
        QTensor::new(g)
    }

    #[test]
    fn spec_values() {
        let p = PotentialSpec::inverse_power(2.0, 1.0).compile().unwrap();
        assert!((p.value(&QTensor::ZERO).unwrap() - 6.0).abs() < 1e-12);
        let p = PotentialSpec::logarithmic(1.0, 0.0).compile().unwrap();
        assert!((p.value(&QTensor::ZERO).unwrap() - 0.895_879_734_614_027_5).abs() < 1e-12);
        let boundary = QTensor::diag(-1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0);
        for spec in [
            PotentialSpec::inverse_power(2.0, 1.0),
            PotentialSpec::logarithmic(1.0, 0.0),
            PotentialSpec::ball_majumdar(),
        ] {
            assert_eq!(spec.compile().unwrap().value(&boundary).unwrap(), f64::INFINITY);
        }
    }

    #[test]
    fn json_round_trip() {
        let spec: PotentialSpec = serde_json::from_str(r#"{"family":"log","k":0.5}"#).unwrap();
        assert_eq!(spec, PotentialSpec::logarithmic(0.5, 0.0));
        let spec: PotentialSpec = serde_json::from_str(r#"{"family":"ball_majumdar"}"#).unwrap();
        assert_eq!(spec, PotentialSpec::ball_majumdar());
        let text = serde_json::to_string(&PotentialSpec::inverse_power(1.5, 2.0)).unwrap();
        assert_eq!(serde_json::from_str::<PotentialSpec>(&text).unwrap(), PotentialSpec::inverse_power(1.5, 2.0));
        assert!(serde_json::from_str::<PotentialSpec>(r#"{"family":"quartic"}"#).is_err());
        assert!(PotentialSpec::inverse_power(-1.0, 1.0).compile().is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let q = QTensor::diag(-0.2, 0.05, 0.15);
        let p = PotentialSpec::inverse_power(1.0, 1.0).compile().unwrap();
        let g = p.gradient(&q).unwrap();
        let fd = fd_gradient(&p, &q, 1e-5);
        assert!((g - fd).norm() <= 1e-6 * g.norm(), "{g:?} vs {fd:?}");

        let mut rng = sampling::rng(3);
        let specs = [
            PotentialSpec::inverse_power(0.5, 2.0),
            PotentialSpec::logarithmic(0.7, 1.0),
            PotentialSpec::inverse_power(1.0, 1.0).with_smoothing(0.05),
            PotentialSpec::ball_majumdar(),
        ];
        for spec in specs {
            let p = spec.compile().unwrap();
            for _ in 0..20 {
                let d = 0.05 + 0.3 * rand::Rng::gen::<f64>(&mut rng);
                let q = sampling::interior_at_distance(&mut rng, d);
                if qtensor::eigen(&q).unwrap().lower_gap() < 0.02 {
                    continue;
                }
                let g = p.gradient(&q).unwrap();
                let fd = fd_gradient(&p, &q, 1e-5);
                assert!((g - fd).norm() <= 1e-6 * g.norm().max(1e-3), "{spec:?}: {g:?} vs {fd:?}");
            }
        }
    }

    #[test]
    fn uniaxial_gradient_is_uniaxial() {
        let n = linalg::normalize(&[1.0, 2.0, -0.5]);
        let cases = [
            (PotentialSpec::inverse_power(1.0, 1.0), -0.3),
            (PotentialSpec::inverse_power(1.0, 1.0).with_smoothing(0.01), 0.4),
            (PotentialSpec::ball_majumdar(), 0.4),
            (PotentialSpec::ball_majumdar(), -0.3),
        ];
        for (spec, s) in cases {
            let q = QTensor::uniaxial(s, &n);
            let g = spec.compile().unwrap().gradient(&q).unwrap();
            let e = qtensor::eigen(&g).unwrap();
            // The distinct eigenvalue sits at one end of the spectrum.
            let (axis, pair) = if (e.lambdas[0] - e.lambdas[1]).abs() < 1e-9 {
                (e.frame[2], (e.lambdas[0], e.lambdas[1]))
            } else {
                (e.frame[0], (e.lambdas[1], e.lambdas[2]))
            };
            assert!((pair.0 - pair.1).abs() < 1e-9, "{spec:?}: {e:?}");
            assert!((linalg::dot(&axis, &n).abs() - 1.0).abs() < 1e-9, "{spec:?}");
        }
    }

    #[test]
    fn bm_is_zero_at_the_isotropic_state() {
        let p = PotentialSpec::ball_majumdar().compile().unwrap();
        assert!((p.value(&QTensor::ZERO).unwrap() - 1.0).abs() < 1e-14);
        assert!(p.gradient(&QTensor::ZERO).unwrap().norm() < 1e-12);
    }

    #[test]
    fn bm_quadrature_refinement() {
        let q = QTensor::uniaxial(0.4, &[0.0, 0.0, 1.0]);
        let base = PotentialSpec::ball_majumdar().compile().unwrap().value(&q).unwrap();
        let fine = PotentialSpec::new(Family::BallMajumdar {
            quad_polar: 640,
            quad_azimuth: 1280,
            offset: 1.0,
            exact_azimuth: true,
        })
        .compile()
        .unwrap()
        .value(&q)
        .unwrap();
        assert!((base - fine).abs() <= 1e-8, "{base} vs {fine}");
        let product = PotentialSpec::new(Family::BallMajumdar {
            quad_polar: 64,
            quad_azimuth: 128,
            offset: 1.0,
            exact_azimuth: false,
        })
        .compile()
        .unwrap()
        .value(&q)
        .unwrap();
        assert!((base - product).abs() <= 1e-8, "{base} vs {product}");
    }

    #[test]
    fn bm_grows_logarithmically() {
        let p = PotentialSpec::ball_majumdar().compile().unwrap();
        let mut ratios = Vec::new();
        for j in 4..=20 {
            let d = 2f64.powi(-j);
            let l1 = LAMBDA_MIN + 2.0 * d / SQRT6;
            let q = QTensor::diag(l1, 0.1, -l1 - 0.1);
            ratios.push(p.value(&q).unwrap() / d.ln().abs());
        }
        let last = ratios[ratios.len() - 1];
        assert!((0.3..2.0).contains(&last), "{ratios:?}");
        let prev = ratios[ratios.len() - 2];
        assert!((last - prev).abs() < 0.02, "{ratios:?}");
    }

    #[test]
    fn degenerate_smallest_eigenvalue() {
        let q = QTensor::diag(-0.1, -0.1, 0.2);
        let p = PotentialSpec::inverse_power(1.0, 1.0).compile().unwrap();
        assert!(matches!(p.gradient(&q), Err(Error::DegenerateEigenvalue { .. })));
        let p = PotentialSpec::inverse_power(1.0, 1.0).with_smoothing(0.01).compile().unwrap();
        assert!(p.gradient(&q).is_ok());
    }
}
