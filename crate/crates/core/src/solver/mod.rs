//! Forward-difference discretization of the Landau-de Gennes energy on the
//! unit cube and a Barzilai-Borwein descent with Armijo safeguard.
//!
//! ```text
//! E_h = h³ Σ_cells ½ gᵀ M g  +  h³ Σ_interior f(Q)
//! ```
//!
//! where `g` stacks the forward differences `D_k⁺ Q` (15 coefficients per cell)
//! and `M` encodes `(L1/2)|∇Q|² + (L2/2)|div Q|² + (L3/2) Q_ij,k Q_ik,j`.
//! The gradient is the exact adjoint of this sum.

pub mod checkpoint;
pub mod field;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{tree_sum, Exec};
use crate::exponents;
use crate::potentials::{Potential, PotentialSpec, FALLBACK_TAU};
use crate::qtensor::{self, QTensor};
use crate::regularize::{Method, RegularizedPotential};
use crate::retract;

pub use field::{make_boundary, Axis, BoundaryData, Director, Grid, QField};

/// Default fractional margin of the interior window used in reports.
pub const DEFAULT_WINDOW: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticConstants {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineSearch {
    pub shrink: f64,
    pub armijo: f64,
    pub barzilai_borwein: bool,
    pub max_backtracks: usize,
    /// First trial step; `None` picks one from the stencil and the bulk
    /// Lipschitz constant.
    pub initial_step: Option<f64>,
}

impl Default for LineSearch {
    fn default() -> Self {
        LineSearch { shrink: 0.5, armijo: 1e-4, barzilai_borwein: true, max_backtracks: 60, initial_step: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Anisotropy in `½|∇Q|² + (A/2)|div Q|²`. Ignored when `elastic` is set.
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(default)]
    pub elastic: Option<ElasticConstants>,
    /// Bulk potential; `None` gives the pure Dirichlet-type energy.
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
    #[serde(default)]
    pub method: Method,
    /// Strictly decreasing regularization levels. Empty means the raw barrier.
    #[serde(default)]
    pub epsilon_schedule: Vec<f64>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Tolerance on `max |∂E/∂Q| / h³`.
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default)]
    pub line_search: LineSearch,
    /// Retraction level applied to nodes that leave the physical set.
    #[serde(default)]
    pub safety_floor: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_max_iters() -> usize {
    20_000
}
fn default_grad_tol() -> f64 {
    1e-6
}

impl SolverConfig {
    pub fn new(a: f64) -> Self {
        SolverConfig {
            a,
            elastic: None,
            potential: None,
            method: Method::default(),
            epsilon_schedule: Vec::new(),
            max_iters: default_max_iters(),
            grad_tol: default_grad_tol(),
            line_search: LineSearch::default(),
            safety_floor: None,
            seed: 0,
        }
    }

    pub fn elastic_constants(&self) -> ElasticConstants {
        self.elastic.unwrap_or(ElasticConstants { l1: 1.0, l2: self.a, l3: 0.0 })
    }

    pub fn validate(&self) -> Result<()> {
        if self.elastic.is_none() && !(self.a > exponents::A_MIN && self.a.is_finite()) {
            return Err(Error::Domain(format!("A must be finite and > -3/5, got {}", self.a)));
        }
        let e = self.elastic_constants();
        let c = exponents::coercivity_check(e.l1, e.l2, e.l3);
        if !c.coercive {
            return Err(Error::Domain(format!("elastic constants are not coercive: margins {:?}", c.margins)));
        }
        if !(self.grad_tol > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidInput("grad_tol and max_iters must be positive".into()));
        }
        let ls = &self.line_search;
        if !(ls.shrink > 0.0 && ls.shrink < 1.0 && ls.armijo > 0.0 && ls.armijo < 1.0) {
            return Err(Error::InvalidInput("line search needs shrink and armijo in (0, 1)".into()));
        }
        if let Some(p) = &self.potential {
            p.validate()?;
        }
        if self.epsilon_schedule.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::InvalidInput("epsilon schedule must be positive".into()));
        }
        if self.epsilon_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidInput("epsilon schedule must be strictly decreasing".into()));
        }
        if let Some(a) = self.safety_floor {
            if !(a > 0.0 && a < qtensor::MAX_DISTANCE) {
                return Err(Error::InvalidInput(format!("safety floor must lie in (0, √6/6), got {a}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EnergyParts {
    pub total: f64,
    pub elastic: f64,
    pub bulk: f64,
}

#[derive(Clone)]
enum Bulk {
    None,
    Raw(Arc<Potential>),
    Regularized(Arc<RegularizedPotential>),
}

/// Discrete energy for a fixed elastic law and bulk term.
/// Bulk value, assembled gradient, BM multipliers and the degenerate flag at one node.
type NodeTerms = (f64, QTensor, Option<[f64; 3]>, bool);

#[derive(Clone)]
pub struct Functional {
    constants: ElasticConstants,
    matrix: [[f64; 15]; 15],
    bulk: Bulk,
    exec: Exec,
}

/// Energy, gradient and per-node dual warm starts at one field.
#[derive(Clone, Debug)]
pub struct Evaluated {
    pub parts: EnergyParts,
    /// `∂E/∂Q` at interior nodes, row-major.
    pub gradient: Vec<QTensor>,
    pub multipliers: Vec<Option<[f64; 3]>>,
    /// Nodes whose gradient went through the soft-min fallback.
    pub degenerate: usize,
}

fn basis() -> [[[f64; 3]; 3]; 5] {
    std::array::from_fn(|a| {
        let mut c = [0.0; 5];
        c[a] = 1.0;
        QTensor::new(c).to_matrix()
    })
}

/// Quadratic form on `g[5k + a] = D_k⁺ c_a` for the elastic density.
fn elastic_matrix(e: ElasticConstants) -> [[f64; 15]; 15] {
    let b = basis();
    let mut m = [[0.0; 15]; 15];
    for k in 0..3 {
        for a in 0..5 {
            for l in 0..3 {
                for c in 0..5 {
                    let (p, q) = (5 * k + a, 5 * l + c);
                    let mut v = if p == q { e.l1 } else { 0.0 };
                    // (div Q)_i = Σ_{k,a} g_{k,a} B_a[i][k]
                    let div: f64 = (0..3).map(|i| b[a][i][k] * b[c][i][l]).sum();
                    // Q_ij,k Q_ik,j with Q_ij,k = g_{k,a} B_a[i][j]
                    let cross: f64 = (0..3).map(|i| b[a][i][l] * b[c][i][k]).sum();
                    v += e.l2 * div + e.l3 * cross;
                    m[p][q] = v;
                }
            }
        }
    }
    m
}

impl Functional {
    /// Build the functional for `cfg` at regularization level `epsilon`
    /// (`None` uses the raw barrier).
    pub fn new(cfg: &SolverConfig, epsilon: Option<f64>, exec: Exec) -> Result<Self> {
        cfg.validate()?;
        let bulk = match (&cfg.potential, epsilon) {
            (None, _) => Bulk::None,
            (Some(spec), None) => Bulk::Raw(Arc::new(spec.compile()?)),
            (Some(spec), Some(eps)) => {
                let base = spec.compile()?;
                Bulk::Regularized(Arc::new(RegularizedPotential::new(&base, eps, cfg.method)?))
            }
        };
        let constants = cfg.elastic_constants();
        Ok(Functional { constants, matrix: elastic_matrix(constants), bulk, exec })
    }

    pub fn constants(&self) -> ElasticConstants {
        self.constants
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn epsilon(&self) -> Option<f64> {
        match &self.bulk {
            Bulk::Regularized(r) => Some(r.epsilon()),
            _ => None,
        }
    }

    /// Lipschitz bound for the bulk gradient, when one is known.
    pub fn bulk_lipschitz(&self) -> Option<f64> {
        match &self.bulk {
            Bulk::Regularized(r) => Some(r.gradient_lipschitz()),
            Bulk::None => Some(0.0),
            Bulk::Raw(_) => None,
        }
    }

    #[inline]
    fn cell_differences(&self, field: &QField, base: usize) -> [f64; 15] {
        let g = field.grid;
        let inv_h = 1.0 / g.h();
        let q0 = &field.values[base].coeffs;
        let mut d = [0.0; 15];
        for k in 0..3 {
            let q1 = &field.values[base + g.stride(k)].coeffs;
            for a in 0..5 {
                d[5 * k + a] = (q1[a] - q0[a]) * inv_h;
            }
        }
        d
    }

    #[inline]
    fn apply_matrix(&self, g: &[f64; 15]) -> [f64; 15] {
        std::array::from_fn(|p| {
            let row = &self.matrix[p];
            let mut s = 0.0;
            for q in 0..15 {
                s += row[q] * g[q];
            }
            s
        })
    }

    /// Elastic energy density at every cell, in cell order.
    fn elastic_densities(&self, field: &QField) -> Vec<f64> {
        let g = field.grid;
        self.exec.map(g.cell_count(), |m| {
            let d = self.cell_differences(field, g.cell_node(m));
            let md = self.apply_matrix(&d);
            0.5 * d.iter().zip(&md).map(|(x, y)| x * y).sum::<f64>()
        })
    }

    fn bulk_value(&self, q: &QTensor, warm: Option<[f64; 3]>) -> Result<f64> {
        match &self.bulk {
            Bulk::None => Ok(0.0),
            Bulk::Raw(p) => p.value(q),
            Bulk::Regularized(r) => r.evaluate(q, warm).map(|e| e.value),
        }
    }

    /// Energy with its elastic/bulk split. Returns `+∞` in `total` and `bulk`
    /// when a raw barrier is evaluated outside the physical set.
    pub fn energy(&self, field: &QField) -> Result<EnergyParts> {
        let g = field.grid;
        let h3 = g.h().powi(3);
        let elastic = h3 * tree_sum(&self.elastic_densities(field));
        let bulk_values: Vec<Result<f64>> =
            self.exec.map(g.interior_count(), |m| self.bulk_value(&field.values[g.interior_node(m)], None));
        let bulk_values: Vec<f64> = bulk_values.into_iter().collect::<Result<_>>()?;
        let bulk = h3 * tree_sum(&bulk_values);
        Ok(EnergyParts { total: elastic + bulk, elastic, bulk })
    }

    /// Energy and exact gradient with respect to the interior coefficients.
    pub fn energy_gradient(&self, field: &QField) -> Result<(EnergyParts, Vec<QTensor>)> {
        let ev = self.evaluate(field, None)?;
        Ok((ev.parts, ev.gradient))
    }

    pub fn evaluate(&self, field: &QField, warm: Option<&[Option<[f64; 3]>]>) -> Result<Evaluated> {
        let g = field.grid;
        let h = g.h();
        let h3 = h.powi(3);
        // Cell residuals h³ M g, then densities from them.
        let cells: Vec<([f64; 15], f64)> = self.exec.map(g.cell_count(), |m| {
            let d = self.cell_differences(field, g.cell_node(m));
            let md = self.apply_matrix(&d);
            let e = 0.5 * d.iter().zip(&md).map(|(x, y)| x * y).sum::<f64>();
            (md.map(|v| v * h3), e)
        });
        let elastic = h3 * tree_sum(&cells.iter().map(|c| c.1).collect::<Vec<_>>());

        let c1 = g.n + 1;
        let cell_of = |idx: usize| -> usize {
            let [i, j, k] = g.coords(idx);
            (i * c1 + j) * c1 + k
        };
        let nodes: Vec<Result<NodeTerms>> = self.exec.map(g.interior_count(), |m| {
            let idx = g.interior_node(m);
            let q = &field.values[idx];
            let mut grad = [0.0; 5];
            let own = &cells[cell_of(idx)].0;
            for k in 0..3 {
                let prev = &cells[cell_of(idx - g.stride(k))].0;
                for (a, g) in grad.iter_mut().enumerate() {
                    *g += (prev[5 * k + a] - own[5 * k + a]) / h;
                }
            }
            let w = warm.and_then(|w| w[m]);
            let (value, bulk_grad, mult, degenerate) = self.bulk_node(q, w)?;
            for (g, b) in grad.iter_mut().zip(bulk_grad.coeffs) {
                *g += h3 * b;
            }
            Ok((value, QTensor::new(grad), mult, degenerate))
        });
        let mut values = Vec::with_capacity(nodes.len());
        let mut gradient = Vec::with_capacity(nodes.len());
        let mut multipliers = Vec::with_capacity(nodes.len());
        let mut degenerate = 0;
        for r in nodes {
            let (v, gq, mu, deg) = r?;
            values.push(v);
            gradient.push(gq);
            multipliers.push(mu);
            degenerate += deg as usize;
        }
        let bulk = h3 * tree_sum(&values);
        Ok(Evaluated { parts: EnergyParts { total: elastic + bulk, elastic, bulk }, gradient, multipliers, degenerate })
    }

    fn bulk_node(&self, q: &QTensor, warm: Option<[f64; 3]>) -> Result<(f64, QTensor, Option<[f64; 3]>, bool)> {
        match &self.bulk {
            Bulk::None => Ok((0.0, QTensor::ZERO, None, false)),
            Bulk::Regularized(r) => {
                let e = r.evaluate(q, warm)?;
                Ok((e.value, e.gradient, e.multipliers, false))
            }
            Bulk::Raw(p) => {
                let value = p.value(q)?;
                if !value.is_finite() {
                    return Ok((f64::INFINITY, QTensor::ZERO, None, false));
                }
                let s = qtensor::eigen(q)?;
                match p.gradient_spectrum(&s, None) {
                    Ok(mu) => Ok((value, QTensor::from_eigen(&mu, &s.frame), None, false)),
                    Err(Error::DegenerateEigenvalue { .. }) => {
                        let mu = p.gradient_spectrum(&s, Some(FALLBACK_TAU))?;
                        Ok((value, QTensor::from_eigen(&mu, &s.frame), None, true))
                    }
                    Err(e) => Err(e),
                }
            }
        }
    }
}

/// `max |∂E/∂Q| / h³` over interior nodes: the pointwise Euler-Lagrange residual.
pub fn residual(gradient: &[QTensor], h: f64) -> f64 {
    gradient.iter().map(QTensor::max_abs).fold(0.0, f64::max) / h.powi(3)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub total: f64,
    pub elastic: f64,
    pub bulk: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct MinimizeResult {
    pub field: QField,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
    pub residual: f64,
    pub converged: bool,
    pub energy: EnergyParts,
    /// Nodes pushed back by the safety retraction.
    pub retractions: usize,
    /// Largest count of soft-min fallback nodes seen in one evaluation.
    pub degenerate_cells: usize,
    pub multipliers: Vec<Option<[f64; 3]>>,
}

fn axpy(x: &[QTensor], alpha: f64, d: &[QTensor]) -> Vec<QTensor> {
    x.iter().zip(d).map(|(a, b)| *a + *b * alpha).collect()
}

fn dot(x: &[QTensor], y: &[QTensor]) -> f64 {
    tree_sum(&x.iter().zip(y).map(|(a, b)| a.dot(b)).collect::<Vec<_>>())
}

fn initial_step(functional: &Functional, h: f64, cfg: &SolverConfig) -> f64 {
    if let Some(s) = cfg.line_search.initial_step {
        return s;
    }
    let e = functional.constants();
    let stiff = 12.0 * h * (e.l1.abs() + e.l2.abs() + e.l3.abs());
    let bulk = h.powi(3) * functional.bulk_lipschitz().unwrap_or(0.0);
    1.0 / (stiff + bulk)
}

/// Descent on the interior coefficients, starting from `field0` and keeping
/// its boundary layer fixed.
pub fn minimize(field0: &QField, functional: &Functional, cfg: &SolverConfig) -> Result<MinimizeResult> {
    minimize_warm(field0, functional, cfg, None)
}

/// [`minimize`] with dual warm starts carried over from a previous solve.
pub fn minimize_warm(
    field0: &QField,
    functional: &Functional,
    cfg: &SolverConfig,
    warm: Option<Vec<Option<[f64; 3]>>>,
) -> Result<MinimizeResult> {
    if !field0.is_finite() {
        return Err(Error::InvalidInput("initial field is not finite".into()));
    }
    let grid = field0.grid;
    let h = grid.h();
    let ls = cfg.line_search;
    let mut field = field0.clone();
    let mut x = field.interior();
    let mut ev = functional.evaluate(&field, warm.as_deref())?;
    if !ev.parts.total.is_finite() {
        return Err(Error::Domain("initial field has infinite energy".into()));
    }
    let mut res = residual(&ev.gradient, h);
    let row = |iter: usize, p: &EnergyParts, r: f64| TraceRow {
        iter,
        total: p.total,
        elastic: p.elastic,
        bulk: p.bulk,
        grad_norm: r,
    };
    let mut trace = vec![row(0, &ev.parts, res)];
    let mut alpha = initial_step(functional, h, cfg);
    let mut retractions = 0;
    let mut degenerate_cells = ev.degenerate;
    let mut iterations = 0;
    let mut converged = res <= cfg.grad_tol;

    while !converged && iterations < cfg.max_iters {
        iterations += 1;
        let g = ev.gradient.clone();
        let gg = dot(&g, &g);
        let mut step = alpha;
        let mut backtracks = 0;
        let (x_new, ev_new) = loop {
            let trial = axpy(&x, -step, &g);
            let mut f_trial = field.clone();
            f_trial.set_interior(&trial);
            let e = functional.evaluate(&f_trial, Some(&ev.multipliers));
            if let Ok(e) = e {
                let decrease = ev.parts.total - e.parts.total;
                let wanted = ls.armijo * step * gg;
                let resolution = 4.0 * f64::EPSILON * ev.parts.total.abs();
                let ok = e.parts.total.is_finite() && (decrease >= wanted || (wanted <= resolution && decrease >= 0.0));
                if ok {
                    break (trial, e);
                }
            }
            backtracks += 1;
            if backtracks > ls.max_backtracks {
                return Err(Error::Stagnation { iteration: iterations, step, energy: ev.parts.total, residual: res });
            }
            step *= ls.shrink;
        };

        let s: Vec<QTensor> = x_new.iter().zip(&x).map(|(a, b)| *a - *b).collect();
        let y: Vec<QTensor> = ev_new.gradient.iter().zip(&g).map(|(a, b)| *a - *b).collect();
        alpha = if ls.barzilai_borwein {
            let sy = dot(&s, &y);
            if sy > 0.0 {
                dot(&s, &s) / sy
            } else {
                2.0 * step
            }
        } else {
            step
        };
        x = x_new;
        field.set_interior(&x);
        ev = ev_new;

        if let Some(floor) = cfg.safety_floor {
            let mut touched = false;
            for (m, q) in x.iter_mut().enumerate() {
                let d = qtensor::eigen(q).map(|s| qtensor::distance_from_min_eigenvalue(s.min()))?;
                if d < 0.0 {
                    *q = retract::push_to_distance(q, d, floor);
                    ev.multipliers[m] = None;
                    retractions += 1;
                    touched = true;
                }
            }
            if touched {
                field.set_interior(&x);
                ev = functional.evaluate(&field, Some(&ev.multipliers))?;
            }
        }

        degenerate_cells = degenerate_cells.max(ev.degenerate);
        res = residual(&ev.gradient, h);
        trace.push(row(iterations, &ev.parts, res));
        converged = res <= cfg.grad_tol;
    }

    Ok(MinimizeResult {
        field,
        iterations,
        trace,
        residual: res,
        converged,
        energy: ev.parts,
        retractions,
        degenerate_cells,
        multipliers: ev.multipliers,
    })
}

/// Discrete L² norm of `a - b` and H¹ seminorm of the difference over the
/// window `[margin, 1 - margin]³`.
pub fn field_difference(a: &QField, b: &QField, margin: f64) -> (f64, f64) {
    let g = a.grid;
    let h = g.h();
    let h3 = h.powi(3);
    let diff = |i: usize| a.values[i] - b.values[i];
    let l2: Vec<f64> = g.window(margin).into_iter().map(|i| diff(i).norm_sq()).collect();
    let h1: Vec<f64> = g
        .window_cells(margin)
        .into_iter()
        .map(|base| (0..3).map(|k| ((diff(base + g.stride(k)) - diff(base)) * (1.0 / h)).norm_sq()).sum())
        .collect();
    ((h3 * tree_sum(&l2)).sqrt(), (h3 * tree_sum(&h1)).sqrt())
}

#[derive(Clone, Debug)]
pub struct ContinuationStage {
    pub epsilon: Option<f64>,
    pub result: MinimizeResult,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Increment {
    pub from_epsilon: f64,
    pub to_epsilon: f64,
    pub l2: f64,
    pub h1: f64,
}

#[derive(Clone, Debug)]
pub struct ContinuationReport {
    pub stages: Vec<ContinuationStage>,
    pub increments: Vec<Increment>,
}

impl ContinuationReport {
    pub fn last(&self) -> &MinimizeResult {
        &self.stages.last().expect("at least one stage").result
    }

    pub fn converged(&self) -> bool {
        self.stages.iter().all(|s| s.result.converged)
    }
}

/// Warm-started solves along `cfg.epsilon_schedule` (a single raw-barrier
/// solve when the schedule is empty). Increments are measured on the default
/// interior window.
pub fn epsilon_continuation(field0: &QField, cfg: &SolverConfig, exec: Exec) -> Result<ContinuationReport> {
    let levels: Vec<Option<f64>> = if cfg.epsilon_schedule.is_empty() {
        vec![None]
    } else {
        cfg.epsilon_schedule.iter().map(|&e| Some(e)).collect()
    };
    let mut stages: Vec<ContinuationStage> = Vec::new();
    let mut increments = Vec::new();
    for eps in levels {
        let functional = Functional::new(cfg, eps, exec)?;
        let (start, warm) = match stages.last() {
            Some(s) => (&s.result.field, Some(s.result.multipliers.clone())),
            None => (field0, None),
        };
        let result = minimize_warm(start, &functional, cfg, warm)?;
        if let Some(prev) = stages.last() {
            let (l2, h1) = field_difference(&result.field, &prev.result.field, DEFAULT_WINDOW);
            increments.push(Increment {
                from_epsilon: prev.epsilon.unwrap_or(0.0),
                to_epsilon: eps.unwrap_or(0.0),
                l2,
                h1,
            });
        }
        let done = !result.converged;
        stages.push(ContinuationStage { epsilon: eps, result });
        if done {
            break;
        }
    }
    Ok(ContinuationReport { stages, increments })
}
