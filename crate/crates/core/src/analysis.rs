//! Post-processing of converged fields: level-set measures near the obstacle,
//! scaling fits, and regularity diagnostics on interior windows.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::tree_sum;
use crate::exponents;
use crate::linalg::Vec3;
use crate::qtensor::{QTensor, MAX_DISTANCE, SQRT6};
use crate::sampling;
use crate::solver::{Grid, QField};

/// `(√6/6)·2^{-j}` for `j = 2..=10`.
pub fn default_levels() -> Vec<f64> {
    (2..=10).map(|j| MAX_DISTANCE * 2f64.powi(-j)).collect()
}

fn check_margin(margin: f64) -> Result<()> {
    if !(0.0..0.5).contains(&margin) {
        return Err(Error::InvalidInput(format!("window margin must lie in [0, 1/2), got {margin}")));
    }
    Ok(())
}

/// Volume `h³ · #nodes` of the window `[margin, 1 - margin]³`.
pub fn window_volume(grid: Grid, margin: f64) -> f64 {
    grid.h().powi(3) * grid.window(margin).len() as f64
}

fn window_distances(field: &QField, margin: f64) -> Result<Vec<(usize, f64)>> {
    check_margin(margin)?;
    let d = field.distances()?;
    Ok(field.grid.window(margin).into_iter().map(|i| (i, d[i])).collect())
}

/// `h³ · #{nodes in the window with d(Q) ≤ a}`.
pub fn level_set_measure(field: &QField, a: f64, margin: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::InvalidInput(format!("level must be positive, got {a}")));
    }
    let d = window_distances(field, margin)?;
    Ok(field.grid.h().powi(3) * d.iter().filter(|(_, v)| *v <= a).count() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Theory {
    pub s: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub p: f64,
    pub q_max: f64,
    /// `s · q_max / 2`.
    pub target: f64,
}

impl Theory {
    pub fn new(s: f64, a: f64) -> Result<Self> {
        let t = exponents::p_of_a(a)?;
        Ok(Theory { s, a, p: t.p, q_max: t.q_max, target: s * t.q_max / 2.0 })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingReport {
    /// Levels in descending order.
    pub levels: Vec<f64>,
    pub measures: Vec<f64>,
    pub margin: f64,
    pub window_volume: f64,
    /// Least-squares slope of `ln |Ω_a ∩ V|` against `ln a`.
    pub beta: Option<f64>,
    /// Root-mean-square residual of the log-log fit.
    pub residual: Option<f64>,
    pub fitted_levels: usize,
    pub empty_at_all_levels: bool,
    pub theory: Option<Theory>,
}

impl ScalingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("a,measure\n");
        for (a, m) in self.levels.iter().zip(&self.measures) {
            out.push_str(&format!("{a:e},{m:e}\n"));
        }
        out
    }
}

/// Least squares `y ≈ β x + c`; returns `(β, c, rms residual)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let beta = sxy / sxx;
    let c = my - beta * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - beta * a - c).powi(2)).sum();
    (beta, c, (rss / n).sqrt())
}

pub fn scaling_fit(field: &QField, levels: &[f64], margin: f64, theory: Option<Theory>) -> Result<ScalingReport> {
    if levels.len() < 3 {
        return Err(Error::InvalidInput(format!("scaling fit needs at least 3 levels, got {}", levels.len())));
    }
    if levels.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::InvalidInput("levels must be positive".into()));
    }
    let mut levels = levels.to_vec();
    levels.sort_by(|a, b| b.total_cmp(a));
    let d = window_distances(field, margin)?;
    let h3 = field.grid.h().powi(3);
    let measures: Vec<f64> = levels.iter().map(|&a| h3 * d.iter().filter(|(_, v)| *v <= a).count() as f64).collect();
    let (x, y): (Vec<f64>, Vec<f64>) =
        levels.iter().zip(&measures).filter(|(_, m)| **m > 0.0).map(|(a, m)| (a.ln(), m.ln())).unzip();
    let (beta, residual) = if x.len() >= 3 {
        let (b, _, r) = linear_fit(&x, &y);
        (Some(b), Some(r))
    } else {
        (None, None)
    };
    Ok(ScalingReport {
        empty_at_all_levels: measures.iter().all(|m| *m == 0.0),
        fitted_levels: x.len(),
        levels,
        measures,
        margin,
        window_volume: window_volume(field.grid, margin),
        beta,
        residual,
        theory,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MinDistance {
    pub distance: f64,
    pub node: usize,
    pub position: Vec3,
}

pub fn min_distance(field: &QField, margin: f64) -> Result<MinDistance> {
    let d = window_distances(field, margin)?;
    let (node, distance) = d
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::InvalidInput("window contains no nodes".into()))?;
    Ok(MinDistance { distance, node, position: field.grid.position(node) })
}

/// `Σ_k |D_k⁺ Q|²` at the cell with base node `b`.
fn cell_gradient_sq(field: &QField, b: usize) -> f64 {
    let g = field.grid;
    let inv_h = 1.0 / g.h();
    (0..3).map(|k| ((field.values[b + g.stride(k)] - field.values[b]) * inv_h).norm_sq()).sum()
}

/// `(1/r) h³ Σ |∇Q|²` over cells whose centres lie in the ball of radius `r`
/// about `center`, intersected with the cube.
pub fn dirichlet_density(field: &QField, center: Vec3, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidInput(format!("radius must be positive, got {r}")));
    }
    let g = field.grid;
    let half = 0.5 * g.h();
    let terms: Vec<f64> = (0..g.cell_count())
        .map(|m| g.cell_node(m))
        .filter(|&b| {
            let p = g.position(b);
            let d2: f64 = (0..3).map(|i| (p[i] + half - center[i]).powi(2)).sum();
            d2 <= r * r
        })
        .map(|b| cell_gradient_sq(field, b))
        .collect();
    Ok(g.h().powi(3) * tree_sum(&terms) / r)
}

/// `(h³ Σ_window |∇Q|^q)^{1/q}` over cells inside the window.
pub fn grad_lq_norm(field: &QField, q: f64, margin: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::InvalidInput(format!("need q ≥ 1, got {q}")));
    }
    check_margin(margin)?;
    let g = field.grid;
    let terms: Vec<f64> =
        g.window_cells(margin).into_iter().map(|b| cell_gradient_sq(field, b).powf(0.5 * q)).collect();
    Ok((g.h().powi(3) * tree_sum(&terms)).powf(1.0 / q))
}

/// Largest `|Q(x) - Q(y)| / |x - y|^α` over `pairs` random pairs of interior
/// nodes.
pub fn holder_seminorm(field: &QField, alpha: f64, pairs: usize, seed: u64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("Hölder exponent must lie in (0, 1), got {alpha}")));
    }
    let g = field.grid;
    let mut rng = sampling::rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let i = g.interior_node(rng.gen_range(0..g.interior_count()));
        let j = g.interior_node(rng.gen_range(0..g.interior_count()));
        if i == j {
            continue;
        }
        let (x, y) = (g.position(i), g.position(j));
        let dist = ((0..3).map(|k| (x[k] - y[k]).powi(2)).sum::<f64>()).sqrt();
        worst = worst.max((field.values[i] - field.values[j]).norm() / dist.powf(alpha));
    }
    Ok(worst)
}

/// Field with `d(Q(x)) = min(|x - x0|, √6/6)`: a scaled copy of the
/// obstacle point `diag(-1/3, 1/6, 1/6)`.
pub fn synthetic_radial_field(grid: Grid, x0: Vec3) -> QField {
    let touch = QTensor::diag(-1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0);
    QField::from_fn(grid, |x| {
        let r = ((0..3).map(|k| (x[k] - x0[k]).powi(2)).sum::<f64>()).sqrt();
        touch * (1.0 - SQRT6 * r.min(MAX_DISTANCE))
    })
}

/// Centre used for the synthetic oracle: near the middle of the cube, off
/// the lattice to avoid symmetric ties.
pub fn synthetic_center(grid: Grid) -> Vec3 {
    let h = grid.h();
    [0.5 + 0.31 * h, 0.5 + 0.17 * h, 0.5 + 0.43 * h]
}

/// Linear field `G · x3`.
pub fn linear_field(grid: Grid, g: QTensor) -> QField {
    QField::from_fn(grid, |x| g * x[2])
}
