//! Dense realisations of the restricted fractional Laplacian on a box, the
//! Dirichlet spectrum on the unit ball and an FFT reference operator.

mod fft;
mod io;
mod kernel;
mod spectrum;

use nalgebra::DMatrix;
use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::lattice::{Grid, SpaceTimeField};

pub use fft::{fft_reference_apply, PeriodicBox};
pub use io::{dump, load, MatrixFormat, OperatorSidecar};
pub use spectrum::{dirichlet_spectrum, richardson, DirichletSpectrum};

/// Largest node count for which [`FracOperator::matrix`] materialises the
/// full matrix.
pub const DENSE_NODE_BUDGET: usize = 8192;

/// `c_{d,s} = s 4^s Γ(d/2 + s) / (π^{d/2} Γ(1 - s))`, the constant giving the
/// full-space symbol `|ξ|^{2s}`.
pub fn normalization(dim: usize, s: f64) -> f64 {
    let d = dim as f64;
    s * 4f64.powf(s) * gamma(0.5 * d + s) / (std::f64::consts::PI.powf(0.5 * d) * gamma(1.0 - s))
}

pub(crate) fn check_order(s: f64) -> Result<()> {
    if s.is_finite() && s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(invalid("s", format!("order must lie in (0, 1), got {s}")))
    }
}

#[derive(Debug, Clone)]
enum Storage {
    /// Translation-invariant entries, indexed by the absolute offset.
    Stencil(Vec<f64>),
    Dense(DMatrix<f64>),
}

/// Symmetric matrix acting on every node of the box, with zero extension
/// outside it.
///
/// `A u(x_i) = c Σ_j w_ij (u_i − u_j) + tail_i u_i`; entries are generated
/// on demand from the offset table, so blocks of large 2D operators can be
/// extracted without forming the whole matrix.
#[derive(Debug, Clone)]
pub struct FracOperator {
    grid: Grid,
    s: f64,
    c: f64,
    storage: Storage,
    tail: Vec<f64>,
}

/// Assembles the operator of order `s` on `grid`.
pub fn assemble(grid: &Grid, s: f64) -> Result<FracOperator> {
    check_order(s)?;
    let n = grid.points_per_axis();
    let c = normalization(grid.dim(), s);
    let scale = c * grid.spacing().powf(-2.0 * s);
    let (mut table, tail) = if grid.dim() == 1 {
        let k = kernel::Kernel1d::new(s);
        let tail = (0..n).map(|i| scale * k.tail(i, n)).collect();
        (k.table(n), tail)
    } else {
        let table = kernel::Kernel2d::new(s).table(n);
        let tail = kernel::row_sums_2d(&table, n).into_iter().map(|r| scale * r).collect();
        (table, tail)
    };
    table.iter_mut().for_each(|w| *w *= scale);
    Ok(FracOperator {
        grid: grid.clone(),
        s,
        c,
        storage: Storage::Stencil(table),
        tail,
    })
}

impl FracOperator {
    pub(crate) fn from_dense(grid: Grid, s: f64, c: f64, a: DMatrix<f64>) -> Self {
        let tail = a.row_iter().map(|r| r.sum()).collect();
        Self {
            grid,
            s,
            c,
            storage: Storage::Dense(a),
            tail,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn order(&self) -> f64 {
        self.s
    }

    pub fn normalization(&self) -> f64 {
        self.c
    }

    /// Exterior coefficient per node; equals the row sum.
    pub fn tail(&self) -> &[f64] {
        &self.tail
    }

    pub fn size(&self) -> usize {
        self.grid.node_count()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(a) => a[(i, j)],
            Storage::Stencil(t) => {
                let n = self.grid.points_per_axis();
                if self.grid.dim() == 1 {
                    t[i.abs_diff(j)]
                } else {
                    let (p, q) = ((i / n).abs_diff(j / n), (i % n).abs_diff(j % n));
                    t[p * n + q]
                }
            }
        }
    }

    /// Submatrix on the given node lists.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| self.entry(rows[r], cols[c]))
    }

    /// Full matrix, refused above [`DENSE_NODE_BUDGET`] nodes.
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.size();
        if let Storage::Dense(a) = &self.storage {
            return Ok(a.clone());
        }
        if n > DENSE_NODE_BUDGET {
            return Err(Error::OverBudget {
                dim: n,
                budget: DENSE_NODE_BUDGET,
            });
        }
        let all: Vec<usize> = (0..n).collect();
        Ok(self.block(&all, &all))
    }

    /// Matrix-vector product on all nodes.
    pub fn apply_vec(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.size() {
            return Err(Error::ShapeMismatch(format!(
                "vector of length {} for an operator on {} nodes",
                u.len(),
                self.size()
            )));
        }
        let support: Vec<usize> = (0..u.len()).filter(|&j| u[j] != 0.0).collect();
        Ok((0..self.size())
            .into_par_iter()
            .map(|i| support.iter().map(|&j| self.entry(i, j) * u[j]).sum())
            .collect())
    }
}

/// Applies the operator level by level.
pub fn apply(op: &FracOperator, field: &SpaceTimeField) -> Result<SpaceTimeField> {
    field.check_grid(&op.grid)?;
    let mut out = SpaceTimeField::zeros(&op.grid, field.time_grid());
    for k in 0..field.levels() {
        let v = op.apply_vec(field.level(k))?;
        out.level_mut(k).copy_from_slice(&v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
