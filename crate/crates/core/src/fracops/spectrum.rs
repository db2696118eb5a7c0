use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::FracOperator;
use crate::error::{invalid, Error, Result};
use crate::lattice::RegionPartition;

/// Leading Dirichlet eigenpairs on the interior mask, orthonormal in the
/// `hx^d`-weighted inner product.
#[derive(Debug, Clone)]
pub struct DirichletSpectrum {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    interior: Vec<usize>,
    cell_volume: f64,
}

impl DirichletSpectrum {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Columns are eigenvectors on the interior nodes.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// Eigenvector `k` extended by zero to all `nodes`.
    pub fn lifted(&self, k: usize, nodes: usize) -> Vec<f64> {
        let mut out = vec![0.0; nodes];
        for (r, &node) in self.interior.iter().enumerate() {
            out[node] = self.vectors[(r, k)];
        }
        out
    }
}

/// First `count` eigenpairs of the operator restricted to interior nodes.
pub fn dirichlet_spectrum(op: &FracOperator, partition: &RegionPartition, count: usize) -> Result<DirichletSpectrum> {
    if partition.shape() != op.grid().shape() {
        return Err(Error::ShapeMismatch("partition built on a different grid".into()));
    }
    let interior = partition.interior().to_vec();
    if count == 0 || count > interior.len() {
        return Err(invalid(
            "count",
            format!("need 1 ≤ count ≤ {} interior nodes, got {count}", interior.len()),
        ));
    }
    let a = op.block(&interior, &interior);
    let eig = SymmetricEigen::try_new(a.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::EigenFailure("symmetric QR iteration exhausted".into()))?;
    let mut order: Vec<usize> = (0..interior.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let vol = op.grid().cell_volume();
    let mut values = Vec::with_capacity(count);
    let mut vectors = DMatrix::zeros(interior.len(), count);
    for (k, &idx) in order.iter().take(count).enumerate() {
        let lambda = eig.eigenvalues[idx];
        let mut v: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
        // deterministic sign: the largest entry is positive
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v.neg_mut();
        }
        let residual = (&a * &v - &v * lambda).norm() / v.norm();
        if !(lambda > 0.0) || residual > 1e-10 * lambda {
            return Err(Error::EigenFailure(format!(
                "eigenpair {k}: λ = {lambda:.6e}, residual {residual:.3e}"
            )));
        }
        v /= vol.sqrt() * v.norm();
        vectors.set_column(k, &v);
        values.push(lambda);
    }
    Ok(DirichletSpectrum {
        values,
        vectors,
        interior,
        cell_volume: vol,
    })
}

/// Richardson extrapolation of two values whose spacings differ by `ratio`,
/// assuming error `O(h^order)`.
pub fn richardson(coarse: f64, fine: f64, ratio: f64, order: f64) -> f64 {
    let r = ratio.powf(order);
    (r * fine - coarse) / (r - 1.0)
}
