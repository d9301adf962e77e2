//! Data-parallel helpers with a sequential fallback.
//!
//! All reductions go through [`tree_sum`], which sums a slice in a fixed
//! pairwise order. Per-item values are produced in index order regardless of
//! the executor, so totals are bit-identical for any thread count and for the
//! sequential build.

use serde::{Deserialize, Serialize};

/// How kernels iterate over cells and samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exec {
    /// Rayon work-stealing when the `parallel` feature is on, otherwise sequential.
    #[default]
    Parallel,
    Sequential,
}

impl Exec {
    /// `f(i)` for `i in 0..len`, collected in index order.
    pub fn map<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..len).into_par_iter().map(f).collect()
            }
            _ => (0..len).map(f).collect(),
        }
    }

    /// Sum of `f(i)` over `0..len` with a deterministic reduction tree.
    pub fn sum<F>(self, len: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        tree_sum(&self.map(len, f))
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Pairwise summation in a fixed binary tree over the slice.
pub fn tree_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    tree_sum(&values[..mid]) + tree_sum(&values[mid..])
}
