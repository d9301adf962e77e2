//! Uniform grids on the unit cube and tensor fields with a Dirichlet layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Vec3};
use crate::qtensor::{self, QTensor};

/// Smallest distance to the obstacle allowed in boundary data.
pub const BOUNDARY_MARGIN: f64 = 0.05;

/// `n` interior nodes per axis plus one boundary node at each end, spacing
/// `h = 1/(n+1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidInput(format!("grid needs n ≥ 4 interior nodes, got {n}")));
        }
        Ok(Grid { n })
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n + 1) as f64
    }

    /// Nodes per axis including the boundary layer.
    pub fn side(&self) -> usize {
        self.n + 2
    }

    pub fn node_count(&self) -> usize {
        self.side().pow(3)
    }

    pub fn interior_count(&self) -> usize {
        self.n.pow(3)
    }

    /// Forward-difference cells: base nodes with every index in `0..=n`.
    pub fn cell_count(&self) -> usize {
        (self.n + 1).pow(3)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let s = self.side();
        (i * s + j) * s + k
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let s = self.side();
        [idx / (s * s), (idx / s) % s, idx % s]
    }

    /// Full index of the `m`-th interior node in `(i, j, k)` row-major order.
    #[inline]
    pub fn interior_node(&self, m: usize) -> usize {
        let n = self.n;
        self.index(m / (n * n) + 1, (m / n) % n + 1, m % n + 1)
    }

    /// Full index of the base node of the `m`-th cell.
    #[inline]
    pub fn cell_node(&self, m: usize) -> usize {
        let c = self.n + 1;
        self.index(m / (c * c), (m / c) % c, m % c)
    }

    /// Index offset of the neighbour in direction `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => self.side() * self.side(),
            1 => self.side(),
            _ => 1,
        }
    }

    pub fn position(&self, idx: usize) -> Vec3 {
        let h = self.h();
        self.coords(idx).map(|c| c as f64 * h)
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.coords(idx).iter().any(|&c| c == 0 || c == self.n + 1)
    }

    /// Whether a point lies in the window `[margin, 1 - margin]³`.
    pub fn in_window(&self, idx: usize, margin: f64) -> bool {
        let tol = 1e-12;
        self.position(idx).iter().all(|&x| x >= margin - tol && x <= 1.0 - margin + tol)
    }

    /// Node indices inside the window, in increasing order.
    pub fn window(&self, margin: f64) -> Vec<usize> {
        (0..self.node_count()).filter(|&i| self.in_window(i, margin)).collect()
    }

    /// Cell base indices whose forward neighbours all lie in the window.
    pub fn window_cells(&self, margin: f64) -> Vec<usize> {
        (0..self.cell_count())
            .map(|m| self.cell_node(m))
            .filter(|&b| self.in_window(b, margin) && (0..3).all(|k| self.in_window(b + self.stride(k), margin)))
            .collect()
    }
}

/// Tensor values on every node of a grid. Boundary nodes hold the Dirichlet
/// data and are never modified by the solver.
#[derive(Clone, Debug, PartialEq)]
pub struct QField {
    pub grid: Grid,
    pub values: Vec<QTensor>,
}

impl QField {
    pub fn constant(grid: Grid, q: QTensor) -> Self {
        QField { grid, values: vec![q; grid.node_count()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Vec3) -> QTensor) -> Self {
        let values = (0..grid.node_count()).map(|i| f(grid.position(i))).collect();
        QField { grid, values }
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> QTensor {
        self.values[self.grid.index(i, j, k)]
    }

    /// Interior values in row-major order.
    pub fn interior(&self) -> Vec<QTensor> {
        (0..self.grid.interior_count()).map(|m| self.values[self.grid.interior_node(m)]).collect()
    }

    pub fn set_interior(&mut self, interior: &[QTensor]) {
        assert_eq!(interior.len(), self.grid.interior_count());
        for (m, q) in interior.iter().enumerate() {
            let idx = self.grid.interior_node(m);
            self.values[idx] = *q;
        }
    }

    /// Copy of `self` with the interior replaced by `f(index, value)`.
    pub fn map_interior(&self, f: impl Fn(usize, &QTensor) -> QTensor) -> QField {
        let mut out = self.clone();
        for m in 0..self.grid.interior_count() {
            let idx = self.grid.interior_node(m);
            out.values[idx] = f(idx, &self.values[idx]);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(QTensor::is_finite)
    }

    /// Distance to the obstacle at every node (negative outside).
    pub fn distances(&self) -> Result<Vec<f64>> {
        self.values.iter().map(|q| qtensor::eigen(q).map(|s| qtensor::distance_from_min_eigenvalue(s.min()))).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Director {
    Constant {
        n: Vec3,
    },
    /// Rotates about `axis` by `2π · pitch` radians per unit length, starting
    /// along the next coordinate axis in cyclic order.
    Twist {
        axis: Axis,
        pitch: f64,
    },
}

impl Director {
    pub fn at(&self, x: Vec3) -> Vec3 {
        match self {
            Director::Constant { n } => linalg::normalize(n),
            Director::Twist { axis, pitch } => {
                let a = axis.index();
                let theta = 2.0 * std::f64::consts::PI * pitch * x[a];
                let mut n = [0.0; 3];
                n[(a + 1) % 3] = theta.cos();
                n[(a + 2) % 3] = theta.sin();
                n
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryData {
    /// `S (n⊗n - I/3)`.
    Uniaxial {
        s: f64,
        director: Director,
    },
    ConstantTensor {
        q: QTensor,
    },
}

impl BoundaryData {
    pub fn validate(&self) -> Result<()> {
        match self {
            BoundaryData::Uniaxial { s, director } => {
                if !(*s > -0.5 && *s < 1.0) {
                    return Err(Error::InvalidInput(format!("order parameter S must lie in (-1/2, 1), got {s}")));
                }
                match director {
                    Director::Constant { n } if !(linalg::norm(n) > 1e-12) || !n.iter().all(|v| v.is_finite()) => {
                        return Err(Error::InvalidInput("director must be a nonzero finite vector".into()));
                    }
                    Director::Twist { pitch, .. } if !pitch.is_finite() => {
                        return Err(Error::InvalidInput("twist pitch must be finite".into()));
                    }
                    _ => {}
                }
            }
            BoundaryData::ConstantTensor { q } => {
                if !q.is_finite() {
                    return Err(Error::InvalidInput("boundary tensor must be finite".into()));
                }
            }
        }
        let d = qtensor::distance(&self.tensor_at([0.0; 3]))?;
        if d < BOUNDARY_MARGIN {
            return Err(Error::Domain(format!(
                "boundary data at distance {d:.4} from the obstacle; need at least {BOUNDARY_MARGIN}"
            )));
        }
        Ok(())
    }

    pub fn tensor_at(&self, x: Vec3) -> QTensor {
        match self {
            BoundaryData::Uniaxial { s, director } => QTensor::uniaxial(*s, &director.at(x)),
            BoundaryData::ConstantTensor { q } => *q,
        }
    }
}

/// Field carrying the boundary data on the Dirichlet layer. The interior is
/// filled with the same formula, which serves as the default initial guess.
pub fn make_boundary(data: &BoundaryData, grid: Grid) -> Result<QField> {
    data.validate()?;
    Ok(QField::from_fn(grid, |x| data.tensor_at(x)))
}
