//! Forward and adjoint solvers for the fractional heat and wave equations
//! with data prescribed on the exterior control region.
//!
//! Exterior data are eliminated: only interior unknowns are evolved and the
//! coupling `A_BW f` moves to the right-hand side, so `u = f + v` with `v`
//! vanishing off the interior.

mod stepper;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fracops::{dirichlet_spectrum, DirichletSpectrum, FracOperator};
use crate::lattice::{NodeKind, RegionPartition, SpaceTimeField, TimeGrid};

pub use stepper::{Coupling, Dynamics, HeatStepper, ModalHeatStepper, WaveStepper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Initial data at `t = −1`.
    Forward,
    /// The transposed scheme, zero terminal data at `t = 1`.
    Adjoint,
}

/// Data of a heat (or wave) problem on a fixed operator and partition.
#[derive(Debug, Clone, Copy)]
pub struct HeatProblem<'a> {
    pub op: &'a FracOperator,
    pub partition: &'a RegionPartition,
    pub time: TimeGrid,
    /// Exterior datum, supported on the control mask.
    pub exterior: Option<&'a SpaceTimeField>,
    /// Interior source, supported on the interior mask.
    pub source: Option<&'a SpaceTimeField>,
    /// Interior initial profile on all nodes (forward direction only).
    pub initial: Option<&'a [f64]>,
    pub direction: Direction,
    pub theta: f64,
}

impl<'a> HeatProblem<'a> {
    /// Homogeneous forward problem with implicit Euler.
    pub fn new(op: &'a FracOperator, partition: &'a RegionPartition, time: TimeGrid) -> Self {
        Self {
            op,
            partition,
            time,
            exterior: None,
            source: None,
            initial: None,
            direction: Direction::Forward,
            theta: 1.0,
        }
    }

    pub fn with_exterior(mut self, f: &'a SpaceTimeField) -> Self {
        self.exterior = Some(f);
        self
    }

    pub fn with_source(mut self, source: &'a SpaceTimeField) -> Self {
        self.source = Some(source);
        self
    }

    pub fn with_initial(mut self, u0: &'a [f64]) -> Self {
        self.initial = Some(u0);
        self
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    fn validate(&self) -> Result<()> {
        stepper::check_theta(self.theta)?;
        let grid = self.op.grid();
        if self.partition.shape() != grid.shape() {
            return Err(Error::ShapeMismatch("partition built on a different grid".into()));
        }
        let check = |field: &SpaceTimeField, allowed: NodeKind, what: &str| -> Result<()> {
            field.check_grid(grid)?;
            if field.time_grid() != self.time {
                return Err(Error::ShapeMismatch(format!("{what} lives on a different time grid")));
            }
            for k in 0..field.levels() {
                for (node, v) in field.level(k).iter().enumerate() {
                    if *v != 0.0 && self.partition.kind(node) != allowed {
                        return Err(Error::ShapeMismatch(format!(
                            "{what} is nonzero off its mask at node {node}, level {k}"
                        )));
                    }
                }
            }
            Ok(())
        };
        if let Some(f) = self.exterior {
            check(f, NodeKind::Control, "exterior datum")?;
        }
        if let Some(src) = self.source {
            check(src, NodeKind::Interior, "interior source")?;
        }
        if let Some(u0) = self.initial {
            if u0.len() != grid.node_count() {
                return Err(Error::ShapeMismatch("initial profile length".into()));
            }
            if self.direction == Direction::Adjoint {
                return Err(invalid("initial", "adjoint problems carry zero terminal data"));
            }
        }
        Ok(())
    }

    fn forcing(&self, coupling: &Coupling) -> DMatrix<f64> {
        let f = self.exterior.map(|f| f.gather(&coupling.control));
        let src = self.source.map(|s| s.gather(&coupling.interior));
        coupling.forcing(f.as_ref(), src.as_ref())
    }

    fn initial_interior(&self, coupling: &Coupling) -> Option<DVector<f64>> {
        self.initial
            .map(|u0| DVector::from_iterator(coupling.interior.len(), coupling.interior.iter().map(|&k| u0[k])))
    }
}

/// Assembles `u = f + v` on the full grid from interior values `v`.
fn assemble_trajectory(problem: &HeatProblem, coupling: &Coupling, v: &DMatrix<f64>) -> Result<SpaceTimeField> {
    let grid = problem.op.grid();
    let mut u = SpaceTimeField::scatter(grid, problem.time, &coupling.interior, v)?;
    if let Some(f) = problem.exterior {
        for k in 0..problem.time.levels() {
            let src = f.level(k);
            let dst = u.level_mut(k);
            for &node in &coupling.control {
                dst[node] = src[node];
            }
        }
    }
    Ok(u)
}

/// Full-grid θ-scheme solve.
pub fn solve_heat(problem: &HeatProblem) -> Result<SpaceTimeField> {
    problem.validate()?;
    let stepper = HeatStepper::new(problem.op, problem.partition, problem.time, problem.theta)?;
    let c = stepper.coupling();
    let g = problem.forcing(c);
    let v = match problem.direction {
        Direction::Forward => stepper.propagate_from(&g, problem.initial_interior(c).as_ref()),
        Direction::Adjoint => stepper.propagate_adjoint(&g),
    };
    assemble_trajectory(problem, c, &v)
}

/// Galerkin solve in the first `modes` Dirichlet eigenvectors.
pub fn solve_heat_galerkin(problem: &HeatProblem, modes: usize) -> Result<SpaceTimeField> {
    let spectrum = dirichlet_spectrum(problem.op, problem.partition, modes)?;
    solve_heat_galerkin_with(problem, &spectrum, modes)
}

/// As [`solve_heat_galerkin`] with a precomputed spectrum.
pub fn solve_heat_galerkin_with(problem: &HeatProblem, spectrum: &DirichletSpectrum, modes: usize) -> Result<SpaceTimeField> {
    problem.validate()?;
    if problem.exterior.is_some_and(|f| f.max_abs() != 0.0) {
        return Err(invalid("exterior", "the Galerkin backend needs homogeneous exterior data"));
    }
    if problem.initial.is_some() {
        return Err(invalid("initial", "the Galerkin backend starts from zero"));
    }
    if modes == 0 || modes > spectrum.count() {
        return Err(invalid(
            "modes",
            format!("need 1 ≤ modes ≤ {} available eigenpairs, got {modes}", spectrum.count()),
        ));
    }
    if spectrum.interior() != problem.partition.interior() {
        return Err(Error::ShapeMismatch("spectrum computed on another interior mask".into()));
    }
    let coupling = Coupling::new(problem.op, problem.partition, problem.time)?;
    let basis = spectrum.vectors().columns(0, modes).into_owned();
    let stepper = ModalHeatStepper::new(coupling, &spectrum.values()[..modes], basis, problem.theta)?;
    let c = stepper.coupling();
    let g = problem.forcing(c);
    let v = match problem.direction {
        Direction::Forward => stepper.propagate(&g),
        Direction::Adjoint => stepper.propagate_adjoint(&g),
    };
    assemble_trajectory(problem, c, &v)
}

/// Wave problem; initial velocity joins the heat problem's data.
#[derive(Debug, Clone, Copy)]
pub struct WaveProblem<'a> {
    pub base: HeatProblem<'a>,
    /// Interior initial velocity on all nodes (forward direction only).
    pub velocity: Option<&'a [f64]>,
}

impl<'a> WaveProblem<'a> {
    pub fn new(base: HeatProblem<'a>) -> Self {
        Self { base, velocity: None }
    }

    pub fn with_velocity(mut self, w0: &'a [f64]) -> Self {
        self.velocity = Some(w0);
        self
    }
}

/// Implicit-midpoint wave solve; returns the displacement trajectory.
pub fn solve_wave(problem: &WaveProblem) -> Result<SpaceTimeField> {
    Ok(solve_wave_with_velocity(problem)?.0)
}

/// Wave solve returning displacement and interior velocity `(u, ∂_t u)`.
pub fn solve_wave_with_velocity(problem: &WaveProblem) -> Result<(SpaceTimeField, SpaceTimeField)> {
    let base = &problem.base;
    base.validate()?;
    let stepper = WaveStepper::new(base.op, base.partition, base.time)?;
    let c = stepper.coupling();
    let g = base.forcing(c);
    let (v, w) = match base.direction {
        Direction::Forward => {
            let w0 = match problem.velocity {
                Some(w0) if w0.len() != base.op.grid().node_count() => {
                    return Err(Error::ShapeMismatch("initial velocity length".into()))
                }
                Some(w0) => Some(DVector::from_iterator(c.interior.len(), c.interior.iter().map(|&k| w0[k]))),
                None => None,
            };
            stepper.propagate_from(&g, base.initial_interior(c).as_ref(), w0.as_ref())
        }
        Direction::Adjoint => {
            if problem.velocity.is_some() {
                return Err(invalid("velocity", "adjoint problems carry zero terminal data"));
            }
            let v = stepper.propagate_adjoint(&g);
            let w = DMatrix::zeros(v.nrows(), v.ncols());
            (v, w)
        }
    };
    let u = assemble_trajectory(base, c, &v)?;
    let velocity = SpaceTimeField::scatter(base.op.grid(), base.time, &c.interior, &w)?;
    Ok((u, velocity))
}

/// Norms of the energy estimate for a homogeneous-exterior heat trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub sup_l2: f64,
    /// `√(Σ_t w_t hx^d (vᵀ A v + vᵀ v))`.
    pub l2_hs: f64,
    /// Surrogate for the dual norm of `∂_t v`: `A^{-1/2}`-weighted forward
    /// differences on interior nodes.
    pub dt_dual_surrogate: f64,
    pub source_l2: f64,
    pub observed_constant: f64,
}

/// Evaluates both sides of the energy estimate for `trajectory`.
pub fn energy_report(trajectory: &SpaceTimeField, problem: &HeatProblem) -> Result<EnergyReport> {
    problem.validate()?;
    trajectory.check_grid(problem.op.grid())?;
    if problem.exterior.is_some_and(|f| f.max_abs() != 0.0) {
        return Err(invalid("exterior", "energy reports need homogeneous exterior data"));
    }
    let coupling = Coupling::new(problem.op, problem.partition, problem.time)?;
    let v = trajectory.gather(&coupling.interior);
    let vol = coupling.cell_volume;
    let a = &coupling.a_bb;
    let mut sup = 0.0f64;
    let mut hs = 0.0;
    for (k, w) in coupling.weights.iter().enumerate() {
        let col = v.column(k);
        sup = sup.max(col.norm_squared() * vol);
        hs += w * vol * (col.dot(&(a * col)) + col.norm_squared());
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("interior block is not positive definite".into()))?;
    let dt = problem.time.dt();
    let mut dual = 0.0;
    for k in 0..v.ncols() - 1 {
        let d = (v.column(k + 1) - v.column(k)) / dt;
        dual += dt * vol * d.dot(&chol.solve(&d));
    }
    let source_l2 = match problem.source {
        Some(src) => coupling.dot(&src.gather(&coupling.interior), &src.gather(&coupling.interior)).sqrt(),
        None => 0.0,
    };
    let report = EnergyReport {
        sup_l2: sup.sqrt(),
        l2_hs: hs.sqrt(),
        dt_dual_surrogate: dual.sqrt(),
        source_l2,
        observed_constant: 0.0,
    };
    let lhs = report.sup_l2 + report.l2_hs + report.dt_dual_surrogate;
    if source_l2 == 0.0 {
        if lhs > 0.0 && problem.initial.is_none() {
            return Err(Error::Numerical("nonzero trajectory from zero data".into()));
        }
        return Ok(report);
    }
    Ok(EnergyReport {
        observed_constant: lhs / source_l2,
        ..report
    })
}

/// Relative residual of the discrete duality `(P f, v) = −(f, A φ_v)_W`.
pub fn duality_residual(
    f: &SpaceTimeField,
    v: &SpaceTimeField,
    op: &FracOperator,
    partition: &RegionPartition,
    theta: f64,
) -> Result<f64> {
    let time = f.time_grid();
    if v.time_grid() != time {
        return Err(Error::ShapeMismatch("f and v use different time grids".into()));
    }
    let forward = HeatProblem::new(op, partition, time).with_exterior(f).with_theta(theta);
    let u = solve_heat(&forward)?;
    let adjoint = HeatProblem::new(op, partition, time)
        .with_source(v)
        .with_direction(Direction::Adjoint)
        .with_theta(theta);
    let phi = solve_heat(&adjoint)?;

    let coupling = Coupling::new(op, partition, time)?;
    let ub = u.gather(&coupling.interior);
    let vb = v.gather(&coupling.interior);
    let fw = f.gather(&coupling.control);
    let a_phi = coupling.exterior_action(&phi.gather(&coupling.interior));
    let inner = |a: &DMatrix<f64>, b: &DMatrix<f64>| coupling.dot(a, b);
    let lhs = inner(&ub, &vb);
    let rhs = -inner(&fw, &a_phi);
    let scale = inner(&fw, &fw).sqrt() * inner(&vb, &vb).sqrt();
    if scale == 0.0 {
        return Ok((lhs - rhs).abs());
    }
    Ok((lhs - rhs).abs() / scale)
}

#[cfg(test)]
mod tests;
