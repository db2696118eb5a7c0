//! Caffarelli–Silvestre extension on a truncated half-strip over a 1D box.
//!
//! `∇·(y^{1−2s}∇v̄) = 0` is discretised by finite volumes on a graded strip
//! and solved exactly by a sine transform in `x` and a tridiagonal solve per
//! mode in `y`. The weighted Neumann trace then realises `(−Δ)^s`.

mod smallness;

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::fracops::{check_order, fft_reference_apply, PeriodicBox};
use crate::lattice::{fmt_num, Grid};

pub use smallness::{
    bulk_boundary_ratio, fit_exponent, smallness_ensemble, smallness_report, three_balls_ratio, BulkBoundary,
    ExponentFit, SmallnessConfig, SmallnessEnsemble, SmallnessReport, SmallnessRow, ALPHA_UPPER, SIGMA_GRID,
};

/// Shape of the truncated strip, relative to the box half width `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StripConfig {
    /// Half width of the strip over `L`; at least 1.
    pub lateral: f64,
    /// Height `Y` over the strip half width; at least 2.
    pub height: f64,
    /// Number of vertical cells `M`.
    pub levels: usize,
    /// Grading exponent `γ`; by default the smallest `γ ≥ 2` with
    /// `y_1 ≤ min(hx², first_level)`.
    pub grading: Option<f64>,
    /// Upper bound on the first positive level under the default grading.
    /// The two-level trace fit is biased by `O(y_1^{2−2s})`.
    pub first_level: f64,
}

impl Default for StripConfig {
    fn default() -> Self {
        Self {
            lateral: 4.0,
            height: 2.0,
            levels: 128,
            grading: None,
            first_level: 1e-8,
        }
    }
}

/// Tangential box grid embedded in a wider strip `[−X, X] × [0, Y]` with
/// levels `y_j = Y (j/M)^γ`.
#[derive(Debug, Clone)]
pub struct HalfStripGrid {
    grid: Grid,
    tangential: Grid,
    offset: usize,
    levels: Vec<f64>,
    grading: f64,
}

impl HalfStripGrid {
    pub fn new(grid: &Grid, config: StripConfig) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::InvalidGrid("the extension solver needs a 1D tangential grid".into()));
        }
        if !(config.lateral >= 1.0) || !config.lateral.is_finite() {
            return Err(invalid("lateral", format!("must be at least 1, got {}", config.lateral)));
        }
        if !(config.height >= 2.0) || !config.height.is_finite() {
            return Err(invalid("height", format!("must be at least 2, got {}", config.height)));
        }
        if config.levels < 4 {
            return Err(invalid("levels", format!("need at least 4 vertical cells, got {}", config.levels)));
        }
        let hx = grid.spacing();
        let pad = ((config.lateral - 1.0) * grid.half_width() / hx).round() as usize;
        let nx = grid.points_per_axis() + 2 * pad;
        let half = grid.half_width() + pad as f64 * hx;
        let tangential = Grid::new(1, half, nx)?;
        let top = config.height * half;
        let m = config.levels as f64;
        let grading = match config.grading {
            Some(g) if g >= 1.0 && g.is_finite() => g,
            Some(g) => return Err(invalid("grading", format!("must be at least 1, got {g}"))),
            None => {
                let y1 = (hx * hx).min(config.first_level);
                if !(y1 > 0.0) {
                    return Err(invalid("first_level", format!("must be positive, got {}", config.first_level)));
                }
                ((top / y1).ln() / m.ln()).max(2.0)
            }
        };
        let levels: Vec<f64> = (0..=config.levels).map(|j| top * (j as f64 / m).powf(grading)).collect();
        Ok(Self {
            grid: grid.clone(),
            tangential,
            offset: pad,
            levels,
            grading,
        })
    }

    /// Default strip over `grid`.
    pub fn over(grid: &Grid) -> Result<Self> {
        Self::new(grid, StripConfig::default())
    }

    /// The box grid carrying the boundary data.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Strip nodes in `x`, extending the box grid with the same spacing.
    pub fn tangential(&self) -> &Grid {
        &self.tangential
    }

    /// Strip column of box node 0.
    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn height(&self) -> f64 {
        *self.levels.last().unwrap()
    }

    pub fn grading(&self) -> f64 {
        self.grading
    }

    /// Dual-cell bounds `[a_j, b_j]` of level `j` in `y`.
    pub fn dual_bounds(&self, j: usize) -> (f64, f64) {
        let y = &self.levels;
        let a = if j == 0 { 0.0 } else { 0.5 * (y[j - 1] + y[j]) };
        let b = if j + 1 == y.len() { y[j] } else { 0.5 * (y[j] + y[j + 1]) };
        (a, b)
    }
}

/// `∫_a^b y^{1−2s} dy`.
pub(crate) fn weight_integral(a: f64, b: f64, s: f64) -> f64 {
    let e = 2.0 - 2.0 * s;
    (b.powf(e) - a.powf(e)) / e
}

/// Vertical edge conductance `1 / ∫ y^{2s−1}` between consecutive levels.
fn edge_weight(lo: f64, hi: f64, s: f64) -> f64 {
    2.0 * s / (hi.powf(2.0 * s) - lo.powf(2.0 * s))
}

/// Extension of one boundary datum; row `j` holds level `y_j`.
#[derive(Debug, Clone)]
pub struct ExtensionField {
    strip: HalfStripGrid,
    s: f64,
    values: DMatrix<f64>,
    /// `v̄ − v` on levels 1 and 2, kept separately to avoid cancellation.
    lift: DMatrix<f64>,
}

impl ExtensionField {
    pub fn strip(&self) -> &HalfStripGrid {
        &self.strip
    }

    pub fn order(&self) -> f64 {
        self.s
    }

    /// `(M + 1) × n_x` values, levels by row.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Value at strip column `i` and level `j`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[(j, i)]
    }

    /// Row at height `y`, linear in `y` between levels.
    pub fn row_at(&self, y: f64) -> Vec<f64> {
        let (j, t) = bracket(self.strip.levels(), y);
        let nx = self.values.ncols();
        (0..nx)
            .map(|i| (1.0 - t) * self.values[(j, i)] + t * self.values[(j + 1, i)])
            .collect()
    }

    /// `y^{1−2s} ∂_y v̄` at height `y`, from edge differences interpolated
    /// between edge midpoints.
    pub fn flux_at(&self, y: f64) -> Vec<f64> {
        let lv = self.strip.levels();
        let nx = self.values.ncols();
        let flux = |j: usize, i: usize| edge_weight(lv[j], lv[j + 1], self.s) * (self.values[(j + 1, i)] - self.values[(j, i)]);
        let mids: Vec<f64> = lv.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        if y <= mids[0] {
            return (0..nx).map(|i| flux(0, i)).collect();
        }
        let (j, t) = bracket(&mids, y);
        (0..nx).map(|i| (1.0 - t) * flux(j, i) + t * flux(j + 1, i)).collect()
    }

    /// Weighted Dirichlet energy `∫ y^{1−2s} |∇v̄|²` of the discrete solution.
    pub fn dirichlet_energy(&self) -> f64 {
        let lv = self.strip.levels();
        let hx = self.strip.tangential.spacing();
        let (rows, nx) = self.values.shape();
        let mut e = 0.0;
        for j in 0..rows {
            let (a, b) = self.strip.dual_bounds(j);
            let h = weight_integral(a, b, self.s) / hx;
            for i in 0..nx - 1 {
                let d = self.values[(j, i + 1)] - self.values[(j, i)];
                e += h * d * d;
            }
            if j + 1 < rows {
                let v = hx * edge_weight(lv[j], lv[j + 1], self.s);
                for i in 0..nx {
                    let d = self.values[(j + 1, i)] - self.values[(j, i)];
                    e += v * d * d;
                }
            }
        }
        e
    }

    /// Weighted `L²` norm `‖y^{(1−2s)/2} v̄‖` over the whole strip.
    pub fn weighted_l2(&self) -> f64 {
        let hx = self.strip.tangential.spacing();
        let mut acc = 0.0;
        for j in 0..self.values.nrows() {
            let (a, b) = self.strip.dual_bounds(j);
            let w = weight_integral(a, b, self.s) * hx;
            acc += w * self.values.row(j).iter().map(|v| v * v).sum::<f64>();
        }
        acc.sqrt()
    }

    /// Writes `x,y,value` rows, level by level.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y,value")?;
        let xs = self.strip.tangential.axis();
        for (j, y) in self.strip.levels().iter().enumerate() {
            for (i, x) in xs.iter().enumerate() {
                writeln!(out, "{},{},{}", fmt_num(*x), fmt_num(*y), fmt_num(self.values[(j, i)]))?;
            }
        }
        Ok(())
    }
}

/// Index `j` and fraction `t` with `y = (1−t) p_j + t p_{j+1}`, clamped.
fn bracket(points: &[f64], y: f64) -> (usize, f64) {
    let last = points.len() - 2;
    let j = points.partition_point(|&p| p <= y).saturating_sub(1).min(last);
    let t = ((y - points[j]) / (points[j + 1] - points[j])).clamp(0.0, 1.0);
    (j, t)
}

/// Factorised strip operator of one order; shared across time slices.
pub struct ExtensionSolver {
    strip: HalfStripGrid,
    s: f64,
    /// Per sine mode, the vertical profile with unit trace minus one;
    /// `modes × (M+1)`.
    profiles: DMatrix<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ExtensionSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExtensionSolver").field("s", &self.s).field("modes", &self.profiles.nrows()).finish()
    }
}

impl ExtensionSolver {
    pub fn new(strip: &HalfStripGrid, s: f64) -> Result<Self> {
        check_order(s)?;
        let lv = strip.levels();
        let m = lv.len() - 1;
        let nx = strip.tangential.points_per_axis();
        let modes = nx - 2;
        let hx = strip.tangential.spacing();
        let edges: Vec<f64> = lv.windows(2).map(|w| edge_weight(w[0], w[1], s)).collect();
        if edges.iter().any(|e| !e.is_finite() || *e <= 0.0) {
            return Err(Error::Numerical("vertical levels are not strictly increasing".into()));
        }
        let horiz: Vec<f64> = (0..=m)
            .map(|j| {
                let (a, b) = strip.dual_bounds(j);
                weight_integral(a, b, s)
            })
            .collect();
        let mut profiles = DMatrix::zeros(modes, m + 1);
        let mut diag = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for k in 0..modes {
            let theta = std::f64::consts::PI * (k + 1) as f64 / (modes + 1) as f64;
            let lambda = (2.0 - 2.0 * theta.cos()) / (hx * hx);
            // Thomas elimination for d = c − 1 on levels 1..M-1 with d_0 = 0,
            // d_M = −1; all data have one sign, so no cancellation
            for j in 1..m {
                let mut d = edges[j - 1] + edges[j] + horiz[j] * lambda;
                let mut r = -horiz[j] * lambda;
                if j > 1 {
                    let f = edges[j - 1] / diag[j - 1];
                    d -= f * edges[j - 1];
                    r += f * rhs[j - 1];
                }
                diag[j] = d;
                rhs[j] = r;
            }
            profiles[(k, m)] = -1.0;
            let mut next = -1.0;
            for j in (1..m).rev() {
                let c = (rhs[j] + edges[j] * next) / diag[j];
                profiles[(k, j)] = c;
                next = c;
            }
        }
        if profiles.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("tridiagonal solve produced non-finite values".into()));
        }
        let fft = FftPlanner::new().plan_fft_forward(2 * (modes + 1));
        Ok(Self {
            strip: strip.clone(),
            s,
            profiles,
            fft,
        })
    }

    pub fn strip(&self) -> &HalfStripGrid {
        &self.strip
    }

    pub fn order(&self) -> f64 {
        self.s
    }

    /// `y_k = Σ_i x_i sin(π i k / (N+1))` for `i, k = 1..N`.
    fn sine_transform(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mut buf = vec![Complex64::new(0.0, 0.0); 2 * (n + 1)];
        for (i, v) in x.iter().enumerate() {
            buf[i + 1] = Complex64::new(*v, 0.0);
            buf[2 * (n + 1) - 1 - i] = Complex64::new(-*v, 0.0);
        }
        self.fft.process(&mut buf);
        (1..=n).map(|k| -0.5 * buf[k].im).collect()
    }

    /// Extends a datum given on the box grid nodes.
    pub fn solve(&self, boundary: &[f64]) -> Result<ExtensionField> {
        let grid = &self.strip.grid;
        if boundary.len() != grid.node_count() {
            return Err(Error::ShapeMismatch(format!(
                "datum of length {} on a grid with {} nodes",
                boundary.len(),
                grid.node_count()
            )));
        }
        let nx = self.strip.tangential.points_per_axis();
        let rows = self.strip.levels.len();
        let mut datum = vec![0.0; nx];
        datum[self.strip.offset..self.strip.offset + boundary.len()].copy_from_slice(boundary);
        let modes = nx - 2;
        let coef = self.sine_transform(&datum[1..nx - 1]);
        let norm = 2.0 / (modes + 1) as f64;
        let mut values = DMatrix::zeros(rows, nx);
        let mut lift = DMatrix::zeros(2, nx);
        values.row_mut(0).iter_mut().zip(&datum).for_each(|(v, d)| *v = *d);
        let mut scaled = vec![0.0; modes];
        for j in 1..rows - 1 {
            for k in 0..modes {
                scaled[k] = norm * coef[k] * self.profiles[(k, j)];
            }
            let row = self.sine_transform(&scaled);
            for (i, d) in row.into_iter().enumerate() {
                values[(j, i + 1)] = datum[i + 1] + d;
                if j <= 2 {
                    lift[(j - 1, i + 1)] = d;
                }
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("extension produced non-finite values".into()));
        }
        Ok(ExtensionField {
            strip: self.strip.clone(),
            s: self.s,
            values,
            lift,
        })
    }
}

/// Extends `boundary` (values on the box nodes of `strip`) to the strip.
pub fn solve_extension(boundary: &[f64], s: f64, strip: &HalfStripGrid) -> Result<ExtensionField> {
    ExtensionSolver::new(strip, s)?.solve(boundary)
}

/// `2^{2s−1} Γ(s) / Γ(1−s)`, the constant for which the outward weighted
/// normal derivative of the extension equals `(−Δ)^s`.
pub fn analytic_cs(s: f64) -> f64 {
    2f64.powf(2.0 * s - 1.0) * gamma(s) / gamma(1.0 - s)
}

/// `c_s · 2s · (−b)` on the box nodes, where `v̄ ≈ v + b y^{2s}` is fitted on
/// the first two positive levels. The sign makes `c_s > 0`.
pub fn neumann_trace(ext: &ExtensionField, cs: f64) -> Result<Vec<f64>> {
    let lv = ext.strip.levels();
    let s = ext.s;
    let (p1, p2) = (lv[1].powf(2.0 * s), lv[2].powf(2.0 * s));
    let denom = p1 * p1 + p2 * p2;
    if !(p1 > 0.0) || !(p2 > p1 * (1.0 + 1e-9)) || !denom.is_finite() {
        return Err(Error::Numerical("first levels too close for the boundary fit".into()));
    }
    let off = ext.strip.offset;
    let n = ext.strip.grid.node_count();
    Ok((off..off + n)
        .map(|i| {
            let b = (ext.lift[(0, i)] * p1 + ext.lift[(1, i)] * p2) / denom;
            -cs * 2.0 * s * b
        })
        .collect())
}

/// Calibration outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub cs: f64,
    /// Relative residual of the least-squares fit over all bumps.
    pub residual: f64,
}

/// Bump `exp(−((x−c)/w)²)` number `k` of the calibration family, with centre
/// and width relative to the box half width.
pub fn calibration_bump(grid: &Grid, k: usize) -> Vec<f64> {
    let l = grid.half_width();
    let c = (k as f64 - 2.0) * 0.075 * l;
    let w = (0.08 + 0.01 * k as f64) * l;
    grid.sample(|p| (-((p[0] - c) / w).powi(2)).exp())
}

/// Least-squares `c_s` matching the unit-constant trace to the spectral
/// reference on five Gaussian bumps; fails above a 10% residual.
pub fn calibrate_cs(s: f64, strip: &HalfStripGrid) -> Result<Calibration> {
    let solver = ExtensionSolver::new(strip, s)?;
    let grid = strip.grid();
    let (mut tt, mut tf, mut ff) = (0.0, 0.0, 0.0);
    let mut pairs = Vec::with_capacity(5);
    for k in 0..5 {
        let bump = calibration_bump(grid, k);
        let t = neumann_trace(&solver.solve(&bump)?, 1.0)?;
        let f = fft_reference_apply(grid, &bump, s, PeriodicBox::Padded)?;
        tt += t.iter().map(|a| a * a).sum::<f64>();
        tf += t.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>();
        ff += f.iter().map(|b| b * b).sum::<f64>();
        pairs.push((t, f));
    }
    if tt == 0.0 {
        return Err(Error::CalibrationFailure(1.0));
    }
    let cs = tf / tt;
    let res: f64 = pairs
        .iter()
        .flat_map(|(t, f)| t.iter().zip(f).map(|(a, b)| (cs * a - b).powi(2)))
        .sum();
    let residual = (res / ff).sqrt();
    if !(residual <= 0.1) {
        return Err(Error::CalibrationFailure(residual));
    }
    Ok(Calibration { cs, residual })
}
