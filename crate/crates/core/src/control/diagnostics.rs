use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optimize::{minimize_from, operator_norm, verify_approximation};
use super::{apply_k_unchecked, ControlContext};
use crate::error::{invalid, Error, Result};
use crate::extension::{analytic_cs, neumann_trace, ExtensionSolver, HalfStripGrid};
use crate::lattice::norm_h1;

/// One run of an ε sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub epsilon: f64,
    pub error: f64,
    /// `‖u − h‖` from an independent forward solve.
    pub verified_error: f64,
    pub cost: f64,
    pub functional: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `log cost ≈ intercept + slope · ε^{−σ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostLaw {
    pub sigma: f64,
    pub intercept: f64,
    pub slope: f64,
    /// Root-mean-square residual of the log fit.
    pub residual: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSweep {
    pub target_norm: f64,
    /// `‖h‖_{H¹}` (heat) or `‖h‖_{H²}` (wave).
    pub regularity_norm: f64,
    pub lipschitz: f64,
    /// Ordered by decreasing ε.
    pub rows: Vec<CostRow>,
    /// Absent when a run failed to converge or fewer than three rows have
    /// positive cost.
    pub law: Option<CostLaw>,
}

impl CostSweep {
    /// Cost never decreases along the sweep.
    pub fn monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].cost >= w[0].cost)
    }

    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }
}

/// Solves for each `ε` in `eps_list` (strictly decreasing), warm-starting
/// every run from the previous minimiser, then re-verifies all rows in
/// parallel and fits the cost law.
pub fn cost_sweep(ctx: &ControlContext, eps_list: &[f64]) -> Result<CostSweep> {
    if eps_list.is_empty() {
        return Err(invalid("eps_list", "empty"));
    }
    if eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("eps_list", "must be positive and strictly decreasing"));
    }
    let power = operator_norm(ctx);
    if !power.converged {
        return Err(Error::Numerical(format!(
            "power iteration on K*K did not settle in {} iterations",
            power.iterations
        )));
    }
    let mut runs = Vec::with_capacity(eps_list.len());
    let mut start: Option<DMatrix<f64>> = None;
    for &eps in eps_list {
        let c = ctx.with_epsilon(eps)?;
        let r = minimize_from(&c, start.as_ref(), Some(power.norm_sq))?;
        start = Some(r.minimizer.clone());
        runs.push((c, r));
    }
    let verified: Vec<f64> = runs
        .par_iter()
        .map(|(c, r)| verify_approximation(r, c).map(|v| v.error))
        .collect::<Result<_>>()?;
    let rows: Vec<CostRow> = runs
        .iter()
        .zip(verified)
        .map(|((_, r), v)| CostRow {
            epsilon: r.epsilon,
            error: r.error,
            verified_error: v,
            cost: r.cost,
            functional: r.functional,
            iterations: r.iterations,
            converged: r.converged,
        })
        .collect();
    let law = if rows.iter().all(|r| r.converged) {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.epsilon, r.cost)).collect();
        fit_cost_law(&pts)
    } else {
        None
    };
    Ok(CostSweep {
        target_norm: ctx.target_norm(),
        regularity_norm: ctx.target_regularity_norm()?,
        lipschitz: power.norm_sq,
        rows,
        law,
    })
}

/// Least-squares fit of `log cost` against `ε^{−σ}`, scanning σ over
/// `0.05, 0.10, …, 4.0` and keeping the smallest residual. Rows with zero
/// cost are skipped.
pub fn fit_cost_law(points: &[(f64, f64)]) -> Option<CostLaw> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(e, c)| *e > 0.0 && *c > 0.0)
        .map(|&(e, c)| (e, c.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let mut best: Option<CostLaw> = None;
    for k in 1..=80 {
        let sigma = 0.05 * k as f64;
        let xs: Vec<f64> = pts.iter().map(|(e, _)| e.powf(-sigma)).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        if !(sxx > 0.0) || !sxx.is_finite() {
            continue;
        }
        let sxy: f64 = xs.iter().zip(&pts).map(|(x, p)| (x - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let rss: f64 = xs.iter().zip(&pts).map(|(x, p)| (p.1 - intercept - slope * x).powi(2)).sum();
        let residual = (rss / n).sqrt();
        if best.is_none_or(|b| residual < b.residual) {
            best = Some(CostLaw {
                sigma,
                intercept,
                slope,
                residual,
                points: pts.len(),
            });
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramianSpectrum {
    /// Descending.
    pub singular_values: Vec<f64>,
    /// `σ_k / σ_1`.
    pub normalized: Vec<f64>,
    /// First index with `σ_k / σ_1 < 1e-8`.
    pub threshold_index: Option<usize>,
    /// Columns assembled, after removing directions `K` maps to zero exactly.
    pub columns: usize,
    pub dropped: usize,
    /// Rows of the control space left after removing those no direction reaches.
    pub rows: usize,
}

/// Singular values of `K` in the weighted inner products, assembled one
/// canonical direction at a time.
///
/// Directions whose image is identically zero are removed first: with the
/// adjoint run backward from the final time, a source on the first level
/// never reaches the control region.
pub fn gramian_svd(ctx: &ControlContext, budget: usize) -> Result<GramianSpectrum> {
    let nb = ctx.partition().interior().len();
    let levels = ctx.time().levels();
    let dim = nb * levels;
    if dim > budget {
        return Err(Error::OverBudget { dim, budget });
    }
    // weight of each node-level pair in the space-time inner product
    let weight = |rows: usize, i: usize, k: usize| {
        let e = unit_at(&DMatrix::zeros(rows, levels), i, k);
        ctx.dot(&e, &e)
    };
    let nw = ctx.partition().control().len();
    let w_rows: Vec<f64> = (0..nw * levels).map(|r| weight(nw, r % nw, r / nw).sqrt()).collect();
    let columns: Vec<Option<Vec<f64>>> = (0..dim)
        .into_par_iter()
        .map(|c| {
            let (i, k) = (c % nb, c / nb);
            let wb = weight(nb, i, k);
            if wb == 0.0 {
                return None;
            }
            let v = unit_at(&DMatrix::zeros(nb, levels), i, k) / wb.sqrt();
            let kv = apply_k_unchecked(&v, ctx);
            let col: Vec<f64> = kv
                .as_slice()
                .iter()
                .zip(&w_rows)
                .map(|(a, w)| a * w)
                .collect();
            col.iter().any(|x| *x != 0.0).then_some(col)
        })
        .collect();
    let kept: Vec<Vec<f64>> = columns.into_iter().flatten().collect();
    let dropped = dim - kept.len();
    if kept.is_empty() {
        return Err(Error::Numerical("K vanishes on every direction".into()));
    }
    // rows no direction reaches (the terminal level of the adjoint) carry no information
    let live: Vec<usize> = (0..nw * levels).filter(|&r| kept.iter().any(|c| c[r] != 0.0)).collect();
    let m = DMatrix::from_fn(live.len(), kept.len(), |r, c| kept[c][live[r]]);
    let mut sv: Vec<f64> = m
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::EigenFailure("SVD iteration exhausted".into()))?
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let top = sv[0];
    if !(top > 0.0) {
        return Err(Error::Numerical("zero Gramian".into()));
    }
    let normalized: Vec<f64> = sv.iter().map(|x| x / top).collect();
    let threshold_index = normalized.iter().position(|x| *x < 1e-8);
    Ok(GramianSpectrum {
        singular_values: sv,
        normalized,
        threshold_index,
        columns: kept.len(),
        dropped,
        rows: live.len(),
    })
}

fn unit_at(zero: &DMatrix<f64>, i: usize, k: usize) -> DMatrix<f64> {
    let mut e = zero.clone();
    e[(i, k)] = 1.0;
    e
}

/// Both sides of the positivity condition of the auxiliary functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryGap {
    pub delta: f64,
    /// `(ε/2) ‖v̂‖`.
    pub lhs: f64,
    /// `∫ h (−∂_t + ∂^s)[φ̄(·, δ, ·) − φ̄(·, 0, ·)]`.
    pub shift: f64,
    /// `(ε / (‖h‖_{H¹} + 1))^{1/max(s, 1−s)}`.
    pub reference_delta: f64,
}

impl AuxiliaryGap {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.lhs + self.shift >= -tolerance
    }
}

/// Evaluates the auxiliary shift for the minimiser `v` at height `delta`.
///
/// The time derivative is moved onto `h`, which vanishes at both ends.
/// `∂^s φ̄` at height `δ` is `−c_s y^{1−2s} ∂_y φ̄`, at the boundary the
/// fitted Neumann trace. `cs` defaults to the analytic constant.
pub fn auxiliary_functional_gap(
    ctx: &ControlContext,
    v: &DMatrix<f64>,
    delta: f64,
    strip: &HalfStripGrid,
    cs: Option<f64>,
) -> Result<AuxiliaryGap> {
    ctx.check_interior(v)?;
    if !(delta > 0.0 && delta < 0.5) {
        return Err(invalid("delta", format!("must lie in (0, 1/2), got {delta}")));
    }
    let grid = ctx.op().grid();
    if strip.grid() != grid {
        return Err(Error::ShapeMismatch("strip built over a different grid".into()));
    }
    let s = ctx.op().order();
    let cs = cs.unwrap_or_else(|| analytic_cs(s));
    let eps = ctx.epsilon();
    let h1 = norm_h1(grid, ctx.target_field(), ctx.partition().interior(), 0..=ctx.time().steps())?;
    let reference_delta = (eps / (h1 + 1.0)).powf(1.0 / s.max(1.0 - s));
    let lhs = 0.5 * eps * ctx.norm(v);
    if v.iter().all(|x| *x == 0.0) {
        return Ok(AuxiliaryGap {
            delta,
            lhs,
            shift: 0.0,
            reference_delta,
        });
    }
    let phi = ctx.adjoint_state(v);
    let field = ctx.interior_field(&phi)?;
    let solver = ExtensionSolver::new(strip, s)?;
    let interior = ctx.partition().interior();
    let off = strip.offset();
    let levels = ctx.time().levels();
    let slices: Vec<(Vec<f64>, Vec<f64>)> = (0..levels)
        .into_par_iter()
        .map(|k| {
            let ext = solver.solve(field.level(k))?;
            let trace0 = neumann_trace(&ext, cs)?;
            let row = ext.row_at(delta);
            let flux = ext.flux_at(delta);
            let dphi = interior.iter().map(|&i| row[off + i] - field.level(k)[i]).collect();
            let dflux = interior.iter().map(|&i| -cs * flux[off + i] - trace0[i]).collect();
            Ok((dphi, dflux))
        })
        .collect::<Result<_>>()?;
    let nb = interior.len();
    let dphi = DMatrix::from_fn(nb, levels, |i, k| slices[k].0[i]);
    let dflux = DMatrix::from_fn(nb, levels, |i, k| slices[k].1[i]);
    let h = ctx.target();
    let dt = ctx.time().dt();
    let ht = DMatrix::from_fn(nb, levels, |i, k| {
        if k == 0 {
            (h[(i, 1)] - h[(i, 0)]) / dt
        } else if k + 1 == levels {
            (h[(i, k)] - h[(i, k - 1)]) / dt
        } else {
            (h[(i, k + 1)] - h[(i, k - 1)]) / (2.0 * dt)
        }
    });
    let shift = ctx.dot(&ht, &dphi) + ctx.dot(h, &dflux);
    Ok(AuxiliaryGap {
        delta,
        lhs,
        shift,
        reference_delta,
    })
}
