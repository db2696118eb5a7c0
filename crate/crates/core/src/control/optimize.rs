use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{apply_k_star_unchecked, apply_k_unchecked, ControlContext, Equation};
use crate::error::{Error, Result};
use crate::evolution::{solve_heat, solve_wave, HeatProblem, WaveProblem};
use crate::lattice::SpaceTimeField;
use crate::rng::{seeded, uniform_matrix};

/// `J_ε(v) = ½‖Kv‖² + ε‖v‖ − (h, v)`.
pub fn evaluate_functional(v: &DMatrix<f64>, ctx: &ControlContext) -> Result<f64> {
    ctx.check_interior(v)?;
    let kv = apply_k_unchecked(v, ctx);
    Ok(functional_from(ctx, v, &kv))
}

fn functional_from(ctx: &ControlContext, v: &DMatrix<f64>, kv: &DMatrix<f64>) -> f64 {
    0.5 * ctx.dot(kv, kv) + ctx.epsilon() * ctx.norm(v) - ctx.dot(ctx.target(), v)
}

/// Dominant eigenvalue of `K*K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub norm_sq: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration on `K*K` from a seeded start, stopped when consecutive
/// Rayleigh quotients agree to `1e-10`.
pub fn operator_norm(ctx: &ControlContext) -> PowerEstimate {
    let mut rng = seeded(ctx.config().seed ^ 0x9e37_79b9_7f4a_7c15);
    let (rows, cols) = ctx.target().shape();
    let mut x = uniform_matrix(&mut rng, rows, cols);
    x /= ctx.norm(&x);
    let mut last = 0.0;
    for it in 1..=ctx.config().optimizer.power_iterations {
        let y = apply_k_star_unchecked(&apply_k_unchecked(&x, ctx), ctx);
        let lambda = ctx.dot(&x, &y);
        let ny = ctx.norm(&y);
        if ny == 0.0 {
            return PowerEstimate {
                norm_sq: 0.0,
                iterations: it,
                converged: true,
            };
        }
        if it > 1 && (lambda - last).abs() <= 1e-10 * lambda {
            return PowerEstimate {
                norm_sq: lambda,
                iterations: it,
                converged: true,
            };
        }
        last = lambda;
        x = y / ny;
    }
    PowerEstimate {
        norm_sq: last,
        iterations: ctx.config().optimizer.power_iterations,
        converged: false,
    }
}

/// Quantities tying the computed minimiser to the optimality relations.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Certificate {
    /// `‖K*Kv − h + ε v/‖v‖‖ / ‖h‖`.
    pub optimality_residual: f64,
    /// Last `‖v_{k+1} − v_k‖ / max(‖v_k‖, 1)`.
    pub fixed_point_residual: f64,
    /// `|J_ε(v) + ½‖Kv‖²| / (½‖Kv‖²)`.
    pub functional_identity_gap: f64,
    /// `max(0, ‖f‖² + 2J_ε(v)) / (−2J_ε(v))`.
    pub cost_bound_gap: f64,
    /// `−2 J_ε(v)`.
    pub minus_two_j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `J_ε` at the extrapolated point.
    pub functional: f64,
    pub fixed_point_residual: f64,
    pub restarted: bool,
}

/// Outcome of one minimisation.
#[derive(Debug, Clone)]
pub struct ControlResult {
    pub epsilon: f64,
    /// `v̂` on the interior mask.
    pub minimizer: DMatrix<f64>,
    /// `f = −η K v̂` on the control mask.
    pub control: DMatrix<f64>,
    /// `‖P f − h‖` from the optimiser's own operators.
    pub error: f64,
    /// `‖f‖` on `W × T`.
    pub cost: f64,
    pub functional: f64,
    pub certificate: Certificate,
    pub iterations: usize,
    pub converged: bool,
    /// Step size is `1 / lipschitz`.
    pub lipschitz: f64,
    pub history: Vec<IterationRecord>,
}

/// Scalar part of a [`ControlResult`], for JSON reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSummary {
    pub epsilon: f64,
    pub target_norm: f64,
    pub error: f64,
    pub cost: f64,
    pub functional: f64,
    pub minimizer_norm: f64,
    pub certificate: Certificate,
    pub iterations: usize,
    pub converged: bool,
    pub lipschitz: f64,
}

impl ControlResult {
    pub fn summary(&self, ctx: &ControlContext) -> ControlSummary {
        ControlSummary {
            epsilon: self.epsilon,
            target_norm: ctx.target_norm(),
            error: self.error,
            cost: self.cost,
            functional: self.functional,
            minimizer_norm: ctx.norm(&self.minimizer),
            certificate: self.certificate,
            iterations: self.iterations,
            converged: self.converged,
            lipschitz: self.lipschitz,
        }
    }

    pub fn control_field(&self, ctx: &ControlContext) -> Result<SpaceTimeField> {
        ctx.control_field(&self.control)
    }

    pub fn minimizer_field(&self, ctx: &ControlContext) -> Result<SpaceTimeField> {
        ctx.interior_field(&self.minimizer)
    }
}

struct Evaluation {
    control: DMatrix<f64>,
    error: f64,
    cost: f64,
    functional: f64,
    certificate: Certificate,
}

fn evaluate(ctx: &ControlContext, v: &DMatrix<f64>, fixed_point: f64) -> Evaluation {
    let eps = ctx.epsilon();
    let h = ctx.target();
    let kv = apply_k_unchecked(v, ctx);
    let ktkv = apply_k_star_unchecked(&kv, ctx);
    let nv = ctx.norm(v);
    let kv_sq = ctx.dot(&kv, &kv);
    let functional = 0.5 * kv_sq + eps * nv - ctx.dot(h, v);
    let residual = &ktkv - h;
    let error = ctx.norm(&residual);
    let hn = ctx.norm(h);
    let optimality = if nv > 0.0 {
        ctx.norm(&(&residual + v * (eps / nv))) / hn
    } else {
        (hn - eps).max(0.0) / hn
    };
    let control = -ctx.scale_rows(kv);
    let cost = ctx.norm(&control);
    let minus_two_j = -2.0 * functional;
    let identity = if kv_sq > 0.0 {
        (functional + 0.5 * kv_sq).abs() / (0.5 * kv_sq)
    } else {
        functional.abs()
    };
    let bound = if minus_two_j > 0.0 {
        (cost * cost - minus_two_j).max(0.0) / minus_two_j
    } else if cost == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Evaluation {
        control,
        error,
        cost,
        functional,
        certificate: Certificate {
            optimality_residual: optimality,
            fixed_point_residual: fixed_point,
            functional_identity_gap: identity,
            cost_bound_gap: bound,
            minus_two_j,
        },
    }
}

fn certified(ctx: &ControlContext, e: &Evaluation) -> bool {
    let opt = &ctx.config().optimizer;
    e.certificate.functional_identity_gap <= opt.certificate_tolerance
        && e.certificate.cost_bound_gap <= opt.certificate_tolerance
        && e.error <= ctx.epsilon() * (1.0 + 10.0 * opt.tolerance)
}

/// Minimises `J_ε` from `v = 0`.
pub fn minimize(ctx: &ControlContext) -> Result<ControlResult> {
    minimize_from(ctx, None, None)
}

/// Accelerated proximal gradient with optional warm start and a known
/// Lipschitz constant of `K*K`.
///
/// Stops when the fixed-point residual is below the tolerance and the
/// certificates hold; otherwise returns the last iterate flagged as not
/// converged.
pub fn minimize_from(ctx: &ControlContext, start: Option<&DMatrix<f64>>, lipschitz: Option<f64>) -> Result<ControlResult> {
    let eps = ctx.epsilon();
    let h = ctx.target();
    let hn = ctx.norm(h);
    let opt = ctx.config().optimizer;
    if let Some(v0) = start {
        ctx.check_interior(v0)?;
    }
    if hn <= eps {
        // 0 is optimal exactly when ‖h‖ ≤ ε
        let zero = ctx.interior_zeros();
        let e = evaluate(ctx, &zero, 0.0);
        return Ok(ControlResult {
            epsilon: eps,
            control: e.control,
            error: e.error,
            cost: 0.0,
            functional: 0.0,
            certificate: e.certificate,
            minimizer: zero,
            iterations: 0,
            converged: true,
            lipschitz: lipschitz.unwrap_or(0.0),
            history: Vec::new(),
        });
    }
    let lip = match lipschitz {
        Some(l) => l,
        None => {
            let p = operator_norm(ctx);
            if !p.converged {
                return Err(Error::Numerical(format!(
                    "power iteration on K*K did not settle in {} iterations",
                    p.iterations
                )));
            }
            p.norm_sq
        }
    };
    if !(lip > 0.0 && lip.is_finite()) {
        return Err(Error::Numerical(format!("invalid Lipschitz constant {lip}")));
    }
    let tau = 1.0 / lip;
    let mut x = start.cloned().unwrap_or_else(|| ctx.interior_zeros());
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut history = Vec::new();
    let mut fixed_point = f64::INFINITY;
    let mut last_check = 0usize;
    for k in 1..=opt.max_iterations {
        let ky = apply_k_unchecked(&y, ctx);
        let grad = apply_k_star_unchecked(&ky, ctx) - h;
        let j_y = functional_from(ctx, &y, &ky);
        let z = &y - grad * tau;
        let nz = ctx.norm(&z);
        let x_new = if nz > eps * tau { z * (1.0 - eps * tau / nz) } else { ctx.interior_zeros() };
        let step = &x_new - &x;
        fixed_point = ctx.norm(&step) / ctx.norm(&x).max(1.0);
        let restarted = opt.restart && ctx.dot(&(&y - &x_new), &step) > 0.0;
        if restarted {
            t = 1.0;
            y = x_new.clone();
        } else {
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &x_new + step * ((t - 1.0) / t_new);
            t = t_new;
        }
        x = x_new;
        if k <= 100 || k % 100 == 0 {
            history.push(IterationRecord {
                iteration: k,
                functional: j_y,
                fixed_point_residual: fixed_point,
                restarted,
            });
        }
        if !fixed_point.is_finite() {
            return Err(Error::Numerical(format!("iterate diverged at iteration {k}")));
        }
        if fixed_point <= opt.tolerance && (last_check == 0 || k >= last_check + 10) {
            last_check = k;
            let e = evaluate(ctx, &x, fixed_point);
            if certified(ctx, &e) {
                return Ok(finish(ctx, x, e, k, true, lip, history));
            }
        }
    }
    let e = evaluate(ctx, &x, fixed_point);
    let converged = fixed_point <= opt.tolerance && certified(ctx, &e);
    Ok(finish(ctx, x, e, opt.max_iterations, converged, lip, history))
}

fn finish(
    ctx: &ControlContext,
    v: DMatrix<f64>,
    e: Evaluation,
    iterations: usize,
    converged: bool,
    lipschitz: f64,
    mut history: Vec<IterationRecord>,
) -> ControlResult {
    if history.last().is_none_or(|r| r.iteration != iterations) {
        history.push(IterationRecord {
            iteration: iterations,
            functional: e.functional,
            fixed_point_residual: e.certificate.fixed_point_residual,
            restarted: false,
        });
    }
    ControlResult {
        epsilon: ctx.epsilon(),
        minimizer: v,
        control: e.control,
        error: e.error,
        cost: e.cost,
        functional: e.functional,
        certificate: e.certificate,
        iterations,
        converged,
        lipschitz,
        history,
    }
}

/// Independent re-solve of the forward problem driven by the control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    /// `‖u − h‖` on `B × T`.
    pub error: f64,
    /// `max |(u − h, v)| / ‖v‖` over random directions `v`.
    pub weak_residual: f64,
}

/// `u = P f` for the control of `result`, from the evolution solvers.
pub fn forward_response(result: &ControlResult, ctx: &ControlContext) -> Result<SpaceTimeField> {
    let f = result.control_field(ctx)?;
    let base = HeatProblem::new(ctx.op(), ctx.partition(), ctx.time()).with_exterior(&f);
    match ctx.config().equation {
        Equation::Heat => solve_heat(&base.with_theta(ctx.config().theta)),
        Equation::Wave => solve_wave(&WaveProblem::new(base)),
    }
}

/// Recomputes `u = P f` with the evolution solvers and measures `u − h`.
pub fn verify_approximation(result: &ControlResult, ctx: &ControlContext) -> Result<Verification> {
    let u = forward_response(result, ctx)?;
    let diff = u.gather(ctx.partition().interior()) - ctx.target();
    let error = ctx.norm(&diff);
    let mut rng = seeded(ctx.config().seed);
    let (rows, cols) = diff.shape();
    let mut weak = 0.0f64;
    for _ in 0..20 {
        let v = uniform_matrix(&mut rng, rows, cols);
        weak = weak.max(ctx.dot(&diff, &v).abs() / ctx.norm(&v));
    }
    Ok(Verification {
        error,
        weak_residual: weak,
    })
}
