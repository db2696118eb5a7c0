use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{analytic_cs, neumann_trace, weight_integral, ExtensionField, ExtensionSolver, HalfStripGrid, StripConfig};
use crate::error::{invalid, Error, Result};
use crate::evolution::{solve_heat, Direction, HeatProblem};
use crate::fracops::FracOperator;
use crate::lattice::{Cutoff, CutoffProfile, RegionPartition, SpaceTimeField, TimeGrid};

/// Settings shared by the smallness diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmallnessConfig {
    pub strip: StripConfig,
    /// Trace constant; the analytic value when absent.
    pub cs: Option<f64>,
    /// Time-stepping parameter of the dual solve.
    pub theta: f64,
    /// Largest admissible prefactor in the exponent fits.
    pub prefactor_cap: f64,
    /// Scale `c` of the chain length proxy `⌈c |log δ|⌉`.
    pub chain_scale: f64,
}

impl Default for SmallnessConfig {
    fn default() -> Self {
        Self {
            strip: StripConfig::default(),
            cs: None,
            theta: 1.0,
            prefactor_cap: 100.0,
            chain_scale: 1.0,
        }
    }
}

/// Largest exponent `μ` (and best `σ`) with
/// `q ≤ Ĉ · r^{μ δ^σ}` at every sample and `Ĉ` below a cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub c_hat: f64,
    pub mu_hat: f64,
    pub sigma_hat: f64,
    /// False when no positive exponent meets the cap.
    pub feasible: bool,
}

/// One sample `(δ, q, r)` of an interpolation inequality
/// `q ≤ C r^{μ δ^σ}` with `r < 1` the small quantity.
///
/// Searches `σ` over `sigmas` and returns the pair with the largest
/// feasible `μ ≤ upper`, preferring the smaller `σ` on ties.
pub fn fit_exponent(samples: &[(f64, f64, f64)], sigmas: &[f64], upper: f64, cap: f64) -> ExponentFit {
    let infeasible = ExponentFit {
        c_hat: f64::INFINITY,
        mu_hat: 0.0,
        sigma_hat: 0.0,
        feasible: false,
    };
    let pts: Vec<_> = samples.iter().filter(|(_, q, _)| *q > 0.0).copied().collect();
    if pts.is_empty() || samples.iter().any(|(_, q, r)| !q.is_finite() || !r.is_finite()) {
        return infeasible;
    }
    let log_cap = cap.ln();
    let c_of = |mu: f64, sigma: f64| {
        pts.iter()
            .map(|&(d, q, r)| q.ln() - mu * d.powf(sigma) * r.max(f64::MIN_POSITIVE).ln())
            .fold(f64::NEG_INFINITY, f64::max)
            .exp()
    };
    let mut best: Option<(f64, f64)> = None;
    for &sigma in sigmas {
        // each sample bounds μ: μ δ^σ log r ≥ log q − log cap
        let (mut lo, mut mu) = (0.0f64, upper);
        for &(d, q, r) in &pts {
            let a = d.powf(sigma) * r.max(f64::MIN_POSITIVE).ln();
            let slack = log_cap - q.ln();
            if a < 0.0 {
                mu = mu.min(slack / -a);
            } else if a > 0.0 {
                lo = lo.max(-slack / a);
            } else if slack < 0.0 {
                mu = -1.0;
            }
        }
        if mu < lo {
            continue;
        }
        if mu > 0.0 && best.is_none_or(|(m, _)| mu > m * (1.0 + 1e-12)) {
            best = Some((mu, sigma));
        }
    }
    match best {
        Some((mu, sigma)) => ExponentFit {
            c_hat: c_of(mu, sigma),
            mu_hat: mu,
            sigma_hat: sigma,
            feasible: true,
        },
        None => infeasible,
    }
}

/// Weighted norms over the boxes `Q_ρ = [x₀−ρ, x₀+ρ] × [y₀−ρ, y₀+ρ]` for
/// `ρ = r, 2r, 4r`, returned as `(‖Q_2r‖/‖Q_r‖, ‖Q_2r‖/‖Q_4r‖)`; `None`
/// when the field vanishes on `Q_r`.
pub fn three_balls_ratio(ext: &ExtensionField, center: [f64; 2], r: f64) -> Result<Option<(f64, f64)>> {
    let [x0, y0] = center;
    if !(r > 0.0) || y0 < 5.0 * r {
        return Err(Error::InvalidRegion(format!("centre height {y0} below 5r = {}", 5.0 * r)));
    }
    let strip = ext.strip();
    let half = strip.tangential().half_width();
    if x0 - 4.0 * r < -half || x0 + 4.0 * r > half || y0 + 4.0 * r > strip.height() {
        return Err(Error::InvalidRegion("Q_4r leaves the strip".into()));
    }
    let n = [r, 2.0 * r, 4.0 * r].map(|rho| box_norm(ext, [x0 - rho, x0 + rho], [y0 - rho, y0 + rho]));
    if n[0] == 0.0 {
        return Ok(None);
    }
    Ok(Some((n[1] / n[0], n[1] / n[2])))
}

/// `‖y^{(1−2s)/2} v̄‖` over a box, with node values constant on dual cells.
fn box_norm(ext: &ExtensionField, xr: [f64; 2], yr: [f64; 2]) -> f64 {
    let strip = ext.strip();
    let hx = strip.tangential().spacing();
    let xs = strip.tangential().axis();
    let s = ext.order();
    let mut acc = 0.0;
    for j in 0..strip.levels().len() {
        let (a, b) = strip.dual_bounds(j);
        let (lo, hi) = (a.max(yr[0]), b.min(yr[1]));
        if hi <= lo {
            continue;
        }
        let wy = weight_integral(lo, hi, s);
        for (i, x) in xs.iter().enumerate() {
            let ov = (x + 0.5 * hx).min(xr[1]) - (x - 0.5 * hx).max(xr[0]);
            if ov > 0.0 {
                acc += ov * wy * ext.at(i, j).powi(2);
            }
        }
    }
    acc.sqrt()
}

/// Entries of the bulk-boundary interpolation inequality.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BulkBoundary {
    /// `‖y^{(1−2s)/2} v̄‖` over `W/2 × [ℓ/2, ℓ]`.
    pub bulk: f64,
    /// Weighted `H¹` norm over the strip.
    pub energy: f64,
    /// `‖∂^s v̄‖` on `W`.
    pub boundary: f64,
}

/// Bulk, energy and boundary norms for one extension field.
pub fn bulk_boundary_ratio(
    ext: &ExtensionField,
    partition: &RegionPartition,
    cutoff: &Cutoff,
    ell: f64,
    cs: f64,
) -> Result<BulkBoundary> {
    if !(ell > 0.0 && ell <= 1.0) {
        return Err(invalid("ell", format!("reference height must lie in (0, 1], got {ell}")));
    }
    let strip = ext.strip();
    let grid = strip.grid();
    if partition.shape() != grid.shape() {
        return Err(Error::ShapeMismatch("partition does not match the strip grid".into()));
    }
    let hx = grid.spacing();
    let s = ext.order();
    let off = strip.offset();
    let half: Vec<usize> = partition
        .control()
        .iter()
        .copied()
        .filter(|&k| cutoff.in_half_region(grid, partition, k))
        .collect();
    let mut bulk = 0.0;
    for j in 0..strip.levels().len() {
        let (a, b) = strip.dual_bounds(j);
        let (lo, hi) = (a.max(0.5 * ell), b.min(ell));
        if hi <= lo {
            continue;
        }
        let wy = weight_integral(lo, hi, s) * hx;
        bulk += wy * half.iter().map(|&k| ext.at(off + k, j).powi(2)).sum::<f64>();
    }
    let trace = neumann_trace(ext, cs)?;
    let boundary = partition.control().iter().map(|&k| hx * trace[k] * trace[k]).sum::<f64>();
    Ok(BulkBoundary {
        bulk: bulk.sqrt(),
        energy: ext.weighted_l2() + ext.dirichlet_energy().sqrt(),
        boundary: boundary.sqrt(),
    })
}

/// Norms at one height `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallnessRow {
    pub delta: f64,
    /// `‖φ̄‖` on `B × {δ} × T`.
    pub trace_norm: f64,
    /// `‖y^{1−2s} ∂_y φ̄‖` on `B × {δ} × T`.
    pub flux_norm: f64,
    /// Chain length proxy `⌈c |log δ|⌉`.
    pub chain_length: usize,
}

/// Propagation-of-smallness diagnostics for one dual solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallnessReport {
    pub s: f64,
    pub ell: f64,
    pub cs: f64,
    /// `‖∂^s φ̄‖` on `W × {0} × T`.
    pub boundary_norm: f64,
    /// `‖v‖` on `B × T`.
    pub source_norm: f64,
    pub rows: Vec<SmallnessRow>,
    /// Bulk-boundary entries, integrated over time.
    pub bulk: BulkBoundary,
    /// Fit of `‖φ̄‖ ≤ C δ^{s−1} b^{μδ^σ} v^{1−μδ^σ}` over the rows.
    pub trace_fit: ExponentFit,
    /// Fit of `‖y^{1−2s}∂_yφ̄‖ ≤ C δ^{−s} b^{μδ^σ} v^{1−μδ^σ}` over the rows.
    pub flux_fit: ExponentFit,
    /// Three-balls exponent over the time slices, balls centred above `B`.
    pub alpha_hat: Option<f64>,
    /// Samples `(1, ‖Q_2r‖/‖Q_4r‖, ‖Q_r‖/‖Q_4r‖)` behind `alpha_hat`, one per
    /// time slice where the field is nonzero.
    pub three_balls: Vec<(f64, f64, f64)>,
}

impl SmallnessReport {
    /// Samples `(δ, q, r)` of the trace inequality, for ensemble fits.
    pub fn trace_samples(&self) -> Vec<(f64, f64, f64)> {
        self.samples(|row| row.trace_norm * row.delta.powf(1.0 - self.s))
    }

    /// Samples `(δ, q, r)` of the flux inequality.
    pub fn flux_samples(&self) -> Vec<(f64, f64, f64)> {
        self.samples(|row| row.flux_norm * row.delta.powf(self.s))
    }

    fn samples(&self, lhs: impl Fn(&SmallnessRow) -> f64) -> Vec<(f64, f64, f64)> {
        if self.source_norm == 0.0 {
            return Vec::new();
        }
        let r = self.boundary_norm / self.source_norm;
        self.rows.iter().map(|row| (row.delta, lhs(row) / self.source_norm, r)).collect()
    }

    /// Whether both inequalities hold at every row with the given constants.
    pub fn holds(&self, trace: &ExponentFit, flux: &ExponentFit) -> bool {
        let check = |samples: Vec<(f64, f64, f64)>, fit: &ExponentFit| {
            samples
                .iter()
                .all(|&(d, q, r)| q <= fit.c_hat * r.powf(fit.mu_hat * d.powf(fit.sigma_hat)) * (1.0 + 1e-9))
        };
        check(self.trace_samples(), trace) && check(self.flux_samples(), flux)
    }
}

/// Grid of `σ` values searched by the fits.
pub const SIGMA_GRID: [f64; 13] = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0, 5.0];

/// Solves the dual problem with source `v` (interior nodes × time levels),
/// extends every time slice and evaluates the smallness norms at each `δ`.
pub fn smallness_report(
    op: &FracOperator,
    partition: &RegionPartition,
    time: TimeGrid,
    v: &DMatrix<f64>,
    deltas: &[f64],
    ell: f64,
    config: &SmallnessConfig,
) -> Result<SmallnessReport> {
    let grid = op.grid();
    if deltas.is_empty() || deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
        return Err(invalid("deltas", "heights must lie in (0, 1)"));
    }
    let s = op.order();
    let cs = config.cs.unwrap_or_else(|| analytic_cs(s));
    let source = SpaceTimeField::scatter(grid, time, partition.interior(), v)?;
    let problem = HeatProblem::new(op, partition, time)
        .with_source(&source)
        .with_direction(Direction::Adjoint)
        .with_theta(config.theta);
    let phi = solve_heat(&problem)?;
    let strip = HalfStripGrid::new(grid, config.strip)?;
    let solver = ExtensionSolver::new(&strip, s)?;
    let cutoff = Cutoff::new(grid, partition, CutoffProfile::Quintic)?;
    let slices: Vec<ExtensionField> = (0..time.levels())
        .into_par_iter()
        .map(|k| solver.solve(phi.level(k)))
        .collect::<Result<_>>()?;

    let weights = time.trapezoid_weights();
    let hx = grid.spacing();
    let off = strip.offset();
    let interior = partition.interior();
    let on_b = |row: &[f64]| interior.iter().map(|&k| hx * row[off + k].powi(2)).sum::<f64>();
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let (mut tr, mut fl) = (0.0, 0.0);
        for (ext, w) in slices.iter().zip(&weights) {
            tr += w * on_b(&ext.row_at(delta));
            fl += w * on_b(&ext.flux_at(delta));
        }
        rows.push(SmallnessRow {
            delta,
            trace_norm: tr.sqrt(),
            flux_norm: fl.sqrt(),
            chain_length: (config.chain_scale * delta.ln().abs()).ceil() as usize,
        });
    }
    let mut bulk = BulkBoundary::default();
    let mut alpha_samples = Vec::new();
    let (b_lo, b_hi) = interior
        .iter()
        .map(|&k| grid.coords(k)[0])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let radius = 0.125 * (b_hi - b_lo);
    for (ext, w) in slices.iter().zip(&weights) {
        let bb = bulk_boundary_ratio(ext, partition, &cutoff, ell, cs)?;
        bulk.bulk += w * bb.bulk * bb.bulk;
        bulk.energy += w * bb.energy * bb.energy;
        bulk.boundary += w * bb.boundary * bb.boundary;
        if let Some((small, large)) = three_balls_ratio(ext, [0.5 * (b_lo + b_hi), 5.0 * radius], radius)? {
            // ‖Q_2r‖ ≤ C ‖Q_r‖^α ‖Q_4r‖^{1−α}  ⇔  N2/N4 ≤ C (N1/N4)^α
            alpha_samples.push((1.0, large, large / small));
        }
    }
    bulk.bulk = bulk.bulk.sqrt();
    bulk.energy = bulk.energy.sqrt();
    bulk.boundary = bulk.boundary.sqrt();
    let source_norm = problem_norm(v, &weights, hx);

    let mut report = SmallnessReport {
        s,
        ell,
        cs,
        boundary_norm: bulk.boundary,
        source_norm,
        rows,
        bulk,
        trace_fit: ExponentFit {
            c_hat: 0.0,
            mu_hat: 0.0,
            sigma_hat: 0.0,
            feasible: false,
        },
        flux_fit: ExponentFit {
            c_hat: 0.0,
            mu_hat: 0.0,
            sigma_hat: 0.0,
            feasible: false,
        },
        alpha_hat: None,
        three_balls: Vec::new(),
    };
    if source_norm > 0.0 {
        if report.boundary_norm == 0.0 {
            return Err(Error::Numerical("zero boundary norm for a nonzero source".into()));
        }
        report.trace_fit = fit_exponent(&report.trace_samples(), &SIGMA_GRID, 1.0, config.prefactor_cap);
        report.flux_fit = fit_exponent(&report.flux_samples(), &SIGMA_GRID, 1.0, config.prefactor_cap);
        let fit = fit_exponent(&alpha_samples, &[0.0], ALPHA_UPPER, config.prefactor_cap);
        report.alpha_hat = fit.feasible.then_some(fit.mu_hat);
        report.three_balls = alpha_samples;
    }
    Ok(report)
}

/// Upper end of the exponent search for fits that need an exponent in `(0, 1)`.
pub const ALPHA_UPPER: f64 = 0.99;

fn problem_norm(v: &DMatrix<f64>, weights: &[f64], hx: f64) -> f64 {
    v.column_iter()
        .zip(weights)
        .map(|(c, w)| w * hx * c.norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// Smallness reports over an ensemble of random smooth sources, with one
/// exponent fit shared by every draw and both inequalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallnessEnsemble {
    pub reports: Vec<SmallnessReport>,
    /// Joint fit over the trace and flux samples of all draws.
    pub fit: ExponentFit,
    /// Joint three-balls fit over all draws and time slices.
    pub three_balls: ExponentFit,
}

impl SmallnessEnsemble {
    /// Whether the shared fit bounds every draw at every height.
    pub fn holds(&self) -> bool {
        self.fit.feasible && self.reports.iter().all(|r| r.holds(&self.fit, &self.fit))
    }
}

/// Runs [`smallness_report`] on `draws` sources built by
/// [`smooth_trajectory`](crate::rng::smooth_trajectory) with `modes` modes,
/// draw `k` seeded with `seed + k`.
#[allow(clippy::too_many_arguments)]
pub fn smallness_ensemble(
    op: &FracOperator,
    partition: &RegionPartition,
    time: TimeGrid,
    draws: usize,
    modes: usize,
    seed: u64,
    deltas: &[f64],
    ell: f64,
    config: &SmallnessConfig,
) -> Result<SmallnessEnsemble> {
    if draws == 0 || modes == 0 {
        return Err(invalid("draws", "need at least one draw with one mode"));
    }
    let grid = op.grid();
    if grid.dim() != 1 {
        return Err(invalid("dim", "smallness diagnostics are one-dimensional"));
    }
    let coords: Vec<f64> = partition.interior().iter().map(|&k| grid.coords(k)[0]).collect();
    let times = time.times();
    let reports: Vec<SmallnessReport> = (0..draws as u64)
        .map(|k| {
            let v = crate::rng::smooth_trajectory(&mut crate::rng::seeded(seed + k), &coords, -1.0, 1.0, &times, modes);
            smallness_report(op, partition, time, &v, deltas, ell, config)
        })
        .collect::<Result<_>>()?;
    let mut samples = Vec::new();
    let mut balls = Vec::new();
    for r in &reports {
        samples.extend(r.trace_samples());
        samples.extend(r.flux_samples());
        balls.extend(r.three_balls.iter().copied());
    }
    Ok(SmallnessEnsemble {
        fit: fit_exponent(&samples, &SIGMA_GRID, 1.0, config.prefactor_cap),
        three_balls: fit_exponent(&balls, &[0.0], ALPHA_UPPER, config.prefactor_cap),
        reports,
    })
}
