use std::io::BufReader;
use std::path::Path;

use fracheat::control::{
    auxiliary_functional_gap, cost_sweep, forward_response, gramian_svd, minimize, verify_approximation,
    AuxiliaryGap, ControlSummary, CostSweep, GramianSpectrum, Verification,
};
use fracheat::extension::{
    analytic_cs, calibrate_cs, neumann_trace, smallness_ensemble, solve_extension, Calibration, SmallnessEnsemble,
};
use fracheat::fracops::{dirichlet_spectrum, dump, fft_reference_apply, richardson, MatrixFormat, PeriodicBox};
use fracheat::{assemble, ControlContext, Equation, Grid, HalfStripGrid, RegionPartition, SpaceTimeField, TargetProfile};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::output::{Artifacts, Cell};
use crate::{Failure, Status};

pub struct Run<'a> {
    pub config: &'a ExperimentConfig,
    /// Directory of the config file, for relative paths inside it.
    pub base: &'a Path,
    pub verbose: bool,
}

impl Run<'_> {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("[fracheat] {}", msg.as_ref());
        }
    }
}

fn gaussian(grid: &Grid) -> Vec<f64> {
    grid.sample(|x| (-(x[0] * x[0] + x[1] * x[1])).exp())
}

fn rel_l2_within(grid: &Grid, a: &[f64], b: &[f64], radius: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..a.len() {
        if grid.norm_of(k) <= radius {
            num += (a[k] - b[k]).powi(2);
            den += b[k].powi(2);
        }
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

fn coord_cells(grid: &Grid, node: usize) -> Vec<Cell> {
    let c = grid.coords(node);
    (0..grid.dim()).map(|d| Cell::Num(c[d])).collect()
}

fn coord_header(grid: &Grid) -> Vec<&'static str> {
    if grid.dim() == 1 {
        vec!["x"]
    } else {
        vec!["x", "y"]
    }
}

#[derive(Serialize)]
struct OperatorReport {
    s: f64,
    dim: usize,
    half_width: f64,
    points: usize,
    spacing: f64,
    normalization: f64,
    symmetry_residual: f64,
    fft_radius: f64,
    /// `None` when the test field reaches the edge of the box.
    fft_relative_error: Option<f64>,
    lambda1: Option<f64>,
    lambda1_refined: Option<f64>,
    lambda1_extrapolated: Option<f64>,
}

pub fn operator(run: &Run, art: &mut Artifacts) -> Result<Status, Failure> {
    let cfg = run.config;
    cfg.check_order()?;
    let grid = cfg.grid()?;
    let s = cfg.operator.s;
    run.log(format!("assembling s = {s} on {} nodes", grid.node_count()));
    let op = assemble(&grid, s)?;
    let a = op.matrix()?;
    let mut symmetry = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..i {
            symmetry = symmetry.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    let u = gaussian(&grid);
    let assembled = op.apply_vec(&u)?;
    let reference = match fft_reference_apply(&grid, &u, s, PeriodicBox::Padded) {
        Ok(r) => Some(r),
        Err(fracheat::Error::SupportTouchesBoundary) => None,
        Err(e) => return Err(e.into()),
    };
    let radius = 2.0f64.min(grid.half_width());
    let fft_err = reference.as_ref().map(|r| rel_l2_within(&grid, &assembled, r, radius));
    match fft_err {
        Some(e) => run.log(format!("FFT oracle relative error {e:.3e}")),
        None => run.log("Gaussian reaches the box edge; FFT comparison skipped"),
    }
    let (mut l1, mut l2, mut lx) = (None, None, None);
    if grid.dim() == 1 {
        let lam = |g: &Grid| -> Result<f64, Failure> {
            let p = RegionPartition::interior_only(g)?;
            Ok(dirichlet_spectrum(&assemble(g, s)?, &p, 1)?.values()[0])
        };
        let fine = Grid::new(1, grid.half_width(), 2 * grid.points_per_axis() - 1)?;
        let (a1, a2) = (lam(&grid)?, lam(&fine)?);
        l1 = Some(a1);
        l2 = Some(a2);
        lx = Some(richardson(a1, a2, 2.0, 1.0));
    }
    let report = OperatorReport {
        s,
        dim: grid.dim(),
        half_width: grid.half_width(),
        points: grid.points_per_axis(),
        spacing: grid.spacing(),
        normalization: op.normalization(),
        symmetry_residual: symmetry,
        fft_radius: radius,
        fft_relative_error: fft_err,
        lambda1: l1,
        lambda1_refined: l2,
        lambda1_extrapolated: lx,
    };
    art.json("operator.json", &report)?;
    let mut header = coord_header(&grid);
    header.extend(["assembled", "reference", "difference"]);
    if let Some(reference) = &reference {
        let rows = (0..grid.node_count()).map(|k| {
            let mut r = coord_cells(&grid, k);
            r.extend([
                Cell::Num(assembled[k]),
                Cell::Num(reference[k]),
                Cell::Num(assembled[k] - reference[k]),
            ]);
            r
        });
        art.csv("fft_error.csv", &header, rows)?;
    }
    if let Some(format) = cfg.operator.dump {
        let name = match format {
            MatrixFormat::Binary => "operator.bin",
            MatrixFormat::Csv => "operator.csv",
        };
        let path = art.path(name);
        art.path(&format!("{name}.json"));
        dump(&op, &path, format)?;
    }
    Ok(Status::Done)
}

/// Operator, partition, target and a context with `ε` resolved.
struct Problem {
    grid: Grid,
    ctx: ControlContext,
}

fn load_target(run: &Run, grid: &Grid, part: &RegionPartition) -> Result<SpaceTimeField, Failure> {
    let cfg = run.config;
    let time = cfg.time_grid()?;
    let t = cfg.target()?;
    if let Some(p) = t.profile {
        return Ok(p.build(grid, part, time));
    }
    let rel = t.csv.as_ref().expect("checked by check_target_kind");
    let path = run.base.join(rel);
    let file = std::fs::File::open(&path).map_err(|e| Failure::Config(format!("target.csv {}: {e}", path.display())))?;
    let h = SpaceTimeField::read_csv(grid, BufReader::new(file)).map_err(|e| Failure::Config(format!("target.csv: {e}")))?;
    if h.time_grid() != time {
        return Err(Failure::Config(format!(
            "target.csv has {} time steps, time.steps is {}",
            h.time_grid().steps(),
            time.steps()
        )));
    }
    Ok(h)
}

fn problem(run: &Run, default_target: bool) -> Result<Problem, Failure> {
    let cfg = run.config;
    cfg.check_order()?;
    let grid = cfg.grid()?;
    cfg.time_grid()?;
    let part = cfg.partition(&grid)?;
    let h = if default_target && cfg.target.is_none() {
        let p = match cfg.operator.equation {
            Equation::Heat => TargetProfile::H1Bump,
            Equation::Wave => TargetProfile::H2Bump,
        };
        p.build(&grid, &part, cfg.time_grid()?)
    } else {
        cfg.check_target_kind()?;
        load_target(run, &grid, &part)?
    };
    run.log(format!(
        "assembling s = {} on {} nodes, {} interior, {} control",
        cfg.operator.s,
        grid.node_count(),
        part.interior().len(),
        part.control().len()
    ));
    let op = assemble(&grid, cfg.operator.s)?;
    let ctx = ControlContext::new(&op, &part, &h, cfg.control_config(1.0))?;
    Ok(Problem { grid, ctx })
}

fn scale_eps(run: &Run, ctx: &ControlContext, eps: f64) -> f64 {
    let relative = run.config.target.as_ref().is_some_and(|t| t.relative);
    if relative {
        eps * ctx.target_norm()
    } else {
        eps
    }
}

#[derive(Serialize)]
struct ControlReport {
    summary: ControlSummary,
    verification: Verification,
    auxiliary: Vec<AuxiliaryGap>,
}

pub fn control(run: &Run, art: &mut Artifacts) -> Result<Status, Failure> {
    let cfg = run.config;
    cfg.check_target_kind()?;
    let eps = cfg
        .target()?
        .epsilon
        .ok_or_else(|| Failure::Config("target.epsilon is required for `control`".into()))?;
    let Problem { grid, ctx } = problem(run, false)?;
    let eps = scale_eps(run, &ctx, eps);
    let ctx = ctx.with_epsilon(eps)?;
    run.log(format!("minimising with ε = {eps:.6e}, ‖h‖ = {:.6e}", ctx.target_norm()));
    let r = minimize(&ctx)?;
    run.log(format!("{} iterations, error {:.6e}, cost {:.6e}", r.iterations, r.error, r.cost));
    let verification = verify_approximation(&r, &ctx)?;
    let u = forward_response(&r, &ctx)?;
    let residual = u.combine(1.0, ctx.target_field(), -1.0)?;

    let mut auxiliary = Vec::new();
    if let Some(ext) = &cfg.extension {
        if grid.dim() == 1 {
            let strip = HalfStripGrid::new(&grid, ext.strip())?;
            let cs = if ext.calibrate {
                Some(calibrate_cs(cfg.operator.s, &strip)?.cs)
            } else {
                ext.cs
            };
            let first = auxiliary_functional_gap(&ctx, &r.minimizer, 0.25, &strip, cs)?;
            let mut deltas: Vec<f64> = ext.deltas.iter().copied().filter(|d| *d > 0.0 && *d < 0.5).collect();
            if first.reference_delta < 0.5 && first.reference_delta >= strip.levels()[1] {
                deltas.push(first.reference_delta);
            }
            for d in deltas {
                auxiliary.push(auxiliary_functional_gap(&ctx, &r.minimizer, d, &strip, cs)?);
            }
        }
    }
    let report = ControlReport {
        summary: r.summary(&ctx),
        verification,
        auxiliary,
    };
    art.json("control.json", &report)?;
    let f = r.control_field(&ctx)?;
    f.write_csv(&grid, art.writer("control.csv")?)?;
    residual.write_csv(&grid, art.writer("residual.csv")?)?;
    r.minimizer_field(&ctx)?.write_csv(&grid, art.writer("minimizer.csv")?)?;
    art.csv(
        "history.csv",
        &["iteration", "functional", "fixed_point_residual", "restarted"],
        r.history.iter().map(|h| {
            vec![
                Cell::Int(h.iteration),
                Cell::Num(h.functional),
                Cell::Num(h.fixed_point_residual),
                Cell::Bool(h.restarted),
            ]
        }),
    )?;
    if r.converged {
        Ok(Status::Done)
    } else {
        Ok(Status::NotConverged(format!(
            "stopped after {} iterations with fixed-point residual {:.3e}; best iterate saved",
            r.iterations, r.certificate.fixed_point_residual
        )))
    }
}

pub fn sweep(run: &Run, art: &mut Artifacts) -> Result<Status, Failure> {
    let cfg = run.config;
    cfg.check_target_kind()?;
    let list = cfg
        .target()?
        .epsilon_list
        .clone()
        .ok_or_else(|| Failure::Config("target.epsilon_list is required for `sweep`".into()))?;
    if list.is_empty() || list.windows(2).any(|w| w[1] >= w[0]) || list.iter().any(|e| !(*e > 0.0)) {
        return Err(Failure::Config(
            "target.epsilon_list must be positive and strictly decreasing".into(),
        ));
    }
    let Problem { ctx, .. } = problem(run, false)?;
    let list: Vec<f64> = list.iter().map(|&e| scale_eps(run, &ctx, e)).collect();
    run.log(format!("sweeping {} values of ε", list.len()));
    let sweep: CostSweep = cost_sweep(&ctx, &list)?;
    art.csv(
        "sweep.csv",
        &["epsilon", "error", "verified_error", "cost", "functional", "iterations", "converged"],
        sweep.rows.iter().map(|r| {
            vec![
                Cell::Num(r.epsilon),
                Cell::Num(r.error),
                Cell::Num(r.verified_error),
                Cell::Num(r.cost),
                Cell::Num(r.functional),
                Cell::Int(r.iterations),
                Cell::Bool(r.converged),
            ]
        }),
    )?;
    art.json("sweep.json", &sweep)?;
    if sweep.all_converged() {
        Ok(Status::Done)
    } else {
        Ok(Status::NotConverged("some sweep rows did not converge; no cost law fitted".into()))
    }
}

pub fn gramian(run: &Run, art: &mut Artifacts) -> Result<Status, Failure> {
    let Problem { ctx, .. } = problem(run, true)?;
    run.log("assembling K column by column");
    let g: GramianSpectrum = gramian_svd(&ctx, run.config.gramian.budget)?;
    art.csv(
        "gramian.csv",
        &["k", "singular_value", "normalized"],
        g.singular_values
            .iter()
            .zip(&g.normalized)
            .enumerate()
            .map(|(k, (s, n))| vec![Cell::Int(k + 1), Cell::Num(*s), Cell::Num(*n)]),
    )?;
    art.json("gramian.json", &g)?;
    Ok(Status::Done)
}

#[derive(Serialize)]
struct ExtensionReport {
    s: f64,
    cs: f64,
    cs_analytic: f64,
    calibration: Option<Calibration>,
    radius: f64,
    trace_vs_assembled: f64,
    trace_vs_reference: Option<f64>,
    dirichlet_energy: f64,
    /// `(u, trace)` over the box.
    boundary_pairing: f64,
}

pub fn extension_check(run: &Run, art: &mut Artifacts) -> Result<Status, Failure> {
    let cfg = run.config;
    cfg.check_order()?;
    let grid = cfg.grid()?;
    if grid.dim() != 1 {
        return Err(Failure::Config("grid.dim: the extension solver is one-dimensional".into()));
    }
    let ext = cfg.extension();
    let strip = HalfStripGrid::new(&grid, ext.strip())?;
    let s = cfg.operator.s;
    let op = assemble(&grid, s)?;
    let u = gaussian(&grid);
    run.log(format!("extending on {} levels", strip.levels().len()));
    let field = solve_extension(&u, s, &strip)?;
    let calibration = if ext.calibrate { Some(calibrate_cs(s, &strip)?) } else { None };
    let cs = calibration.map(|c| c.cs).or(ext.cs).unwrap_or_else(|| analytic_cs(s));
    let trace = neumann_trace(&field, cs)?;
    let assembled = op.apply_vec(&u)?;
    // the Gaussian is not small enough at the edge of narrow boxes for the padded FFT
    let reference = match fft_reference_apply(&grid, &u, s, PeriodicBox::Padded) {
        Ok(r) => Some(r),
        Err(fracheat::Error::SupportTouchesBoundary) => None,
        Err(e) => return Err(e.into()),
    };
    let radius = 2.0f64.min(grid.half_width());
    let hx = grid.spacing();
    let report = ExtensionReport {
        s,
        cs,
        cs_analytic: analytic_cs(s),
        calibration,
        radius,
        trace_vs_assembled: rel_l2_within(&grid, &trace, &assembled, radius),
        trace_vs_reference: reference.as_ref().map(|r| rel_l2_within(&grid, &trace, r, radius)),
        dirichlet_energy: field.dirichlet_energy(),
        boundary_pairing: hx * u.iter().zip(&trace).map(|(a, b)| a * b).sum::<f64>(),
    };
    run.log(format!("trace vs assembled {:.3e}", report.trace_vs_assembled));
    art.json("extension.json", &report)?;
    art.csv(
        "trace.csv",
        &["x", "trace", "assembled"],
        (0..grid.node_count()).map(|k| vec![Cell::Num(grid.coords(k)[0]), Cell::Num(trace[k]), Cell::Num(assembled[k])]),
    )?;
    field.write_csv(art.writer("extension.csv")?)?;
    Ok(Status::Done)
}

#[derive(Serialize)]
struct SmallnessSummary<'a> {
    holds: bool,
    #[serde(flatten)]
    ensemble: &'a SmallnessEnsemble,
}

pub fn smallness(run: &Run, art: &mut Artifacts) -> Result<Status, Failure> {
    let cfg = run.config;
    cfg.check_order()?;
    let ext = cfg.extension();
    if ext.deltas.is_empty() {
        return Err(Failure::Config("extension.deltas must not be empty for `smallness`".into()));
    }
    if cfg.smallness.draws == 0 {
        return Err(Failure::Config("smallness.draws must be positive".into()));
    }
    let grid = cfg.grid()?;
    let time = cfg.time_grid()?;
    let part = cfg.partition(&grid)?;
    let op = assemble(&grid, cfg.operator.s)?;
    run.log(format!("{} draws over {} heights", cfg.smallness.draws, ext.deltas.len()));
    let ens = smallness_ensemble(
        &op,
        &part,
        time,
        cfg.smallness.draws,
        cfg.smallness.modes,
        cfg.seed,
        &ext.deltas,
        ext.ell,
        &cfg.smallness_config(),
    )?;
    let mut rows = Vec::new();
    for (d, r) in ens.reports.iter().enumerate() {
        for row in &r.rows {
            rows.push(vec![
                Cell::Int(d),
                Cell::Num(row.delta),
                Cell::Num(row.trace_norm),
                Cell::Num(row.flux_norm),
                Cell::Int(row.chain_length),
                Cell::Num(r.boundary_norm),
                Cell::Num(r.source_norm),
            ]);
        }
    }
    art.csv(
        "smallness.csv",
        &["draw", "delta", "trace_norm", "flux_norm", "chain_length", "boundary_norm", "source_norm"],
        rows,
    )?;
    art.json(
        "smallness.json",
        &SmallnessSummary {
            holds: ens.holds(),
            ensemble: &ens,
        },
    )?;
    Ok(Status::Done)
}
