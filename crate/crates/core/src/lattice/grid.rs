use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compact description of a grid, carried by fields so that mismatches can be
/// detected without holding on to the full coordinate arrays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridShape {
    pub dim: usize,
    pub half_width: f64,
    pub points_per_axis: usize,
}

impl GridShape {
    pub fn node_count(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }
}

/// Uniform lattice on the box `[-L, L]^d`, `d ∈ {1, 2}`.
///
/// Nodes are stored with the first axis slowest: node `(i, j)` of a 2D grid
/// has flat index `i * n + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    half_width: f64,
    n: usize,
    hx: f64,
    axis: Vec<f64>,
}

impl Grid {
    pub fn new(dim: usize, half_width: f64, n: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if !(half_width.is_finite() && half_width > 1.0) {
            return Err(Error::InvalidGrid(format!(
                "half width must exceed 1 so the box contains the closed unit ball, got {half_width}"
            )));
        }
        if n % 2 == 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be odd so that x = 0 is a node, got {n}"
            )));
        }
        if n < 17 {
            return Err(Error::InvalidGrid(format!("need at least 17 points per axis, got {n}")));
        }
        let hx = 2.0 * half_width / (n - 1) as f64;
        let mid = (n - 1) / 2;
        // built from the centre outwards so the axis is exactly symmetric
        let axis = (0..n)
            .map(|i| {
                if i >= mid {
                    (i - mid) as f64 * hx
                } else {
                    -((mid - i) as f64 * hx)
                }
            })
            .collect();
        Ok(Self {
            dim,
            half_width,
            n,
            hx,
            axis,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.hx
    }

    /// Volume element `hx^d`.
    pub fn cell_volume(&self) -> f64 {
        self.hx.powi(self.dim as i32)
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    pub fn node_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn shape(&self) -> GridShape {
        GridShape {
            dim: self.dim,
            half_width: self.half_width,
            points_per_axis: self.n,
        }
    }

    /// Axis indices of a flat node index.
    pub fn multi_index(&self, node: usize) -> [usize; 2] {
        if self.dim == 1 {
            [node, 0]
        } else {
            [node / self.n, node % self.n]
        }
    }

    pub fn flat_index(&self, idx: [usize; 2]) -> usize {
        if self.dim == 1 {
            idx[0]
        } else {
            idx[0] * self.n + idx[1]
        }
    }

    /// Coordinates of a node; the second component is zero in 1D.
    pub fn coords(&self, node: usize) -> [f64; 2] {
        let [i, j] = self.multi_index(node);
        if self.dim == 1 {
            [self.axis[i], 0.0]
        } else {
            [self.axis[i], self.axis[j]]
        }
    }

    pub fn norm_of(&self, node: usize) -> f64 {
        let [x, y] = self.coords(node);
        x.hypot(y)
    }

    /// Evaluates `f` at every node.
    pub fn sample(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.node_count()).map(|k| f(self.coords(k))).collect()
    }
}

/// Uniform time grid on `[-1, 1]` with `m` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    steps: usize,
}

impl TimeGrid {
    pub const T0: f64 = -1.0;
    pub const T1: f64 = 1.0;

    pub fn new(steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 time steps, got {steps}")));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of time levels, `m + 1`.
    pub fn levels(&self) -> usize {
        self.steps + 1
    }

    pub fn dt(&self) -> f64 {
        (Self::T1 - Self::T0) / self.steps as f64
    }

    pub fn time(&self, level: usize) -> f64 {
        if level == self.steps {
            Self::T1
        } else {
            Self::T0 + level as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.levels()).map(|k| self.time(k)).collect()
    }

    /// Trapezoid weights over all levels.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        self.trapezoid_weights_on(0, self.steps)
            .expect("full range is always valid")
    }

    /// Trapezoid weights for the closed level range `[first, last]`, zero
    /// outside it.
    pub fn trapezoid_weights_on(&self, first: usize, last: usize) -> Result<Vec<f64>> {
        if first >= last || last > self.steps {
            return Err(Error::ShapeMismatch(format!(
                "time range {first}..={last} invalid for {} steps",
                self.steps
            )));
        }
        let dt = self.dt();
        let mut w = vec![0.0; self.levels()];
        for (k, wk) in w.iter_mut().enumerate().take(last + 1).skip(first) {
            *wk = if k == first || k == last { 0.5 * dt } else { dt };
        }
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_matches_arithmetic() {
        let g = Grid::new(1, 4.0, 257).unwrap();
        assert_eq!(g.spacing(), 0.03125);
        assert_eq!(g.node_count(), 257);
        assert_eq!(g.axis()[128], 0.0);
        assert_eq!(g.axis()[0], -4.0);
        assert_eq!(g.axis()[256], 4.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(Grid::new(1, 4.0, 256), Err(Error::InvalidGrid(_))));
        assert!(Grid::new(1, 1.0, 257).is_err());
        assert!(Grid::new(1, 0.5, 257).is_err());
        assert!(Grid::new(3, 4.0, 257).is_err());
        assert!(Grid::new(1, 4.0, 15).is_err());
        assert!(TimeGrid::new(1).is_err());
    }

    #[test]
    fn two_dimensional_grid_has_origin() {
        let g = Grid::new(2, 2.0, 65).unwrap();
        assert_eq!(g.node_count(), 65 * 65);
        let origin = g.flat_index([32, 32]);
        assert_eq!(g.coords(origin), [0.0, 0.0]);
        assert_eq!(g.multi_index(origin), [32, 32]);
    }

    #[test]
    fn axis_is_symmetric() {
        let g = Grid::new(1, 3.7, 101).unwrap();
        let a = g.axis();
        for i in 0..a.len() {
            assert_eq!(a[i], -a[a.len() - 1 - i]);
        }
    }

    #[test]
    fn trapezoid_weights_sum_to_interval_length() {
        let t = TimeGrid::new(64).unwrap();
        let s: f64 = t.trapezoid_weights().iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        assert_eq!(t.time(0), -1.0);
        assert_eq!(t.time(64), 1.0);
    }
}
