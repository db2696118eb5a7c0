//! Control synthesis by minimisation of the penalised dual energy
//!
//! ```text
//! J_ε(v) = ½‖K v‖² + ε‖v‖ − (h, v),    K v = η · (A φ_v)|_{W×T},
//! ```
//!
//! where `φ_v` solves the adjoint problem with source `v`. The minimiser
//! `v̂` yields the control `f = −η K v̂`, whose forward response satisfies
//! `‖P f − h‖ ≤ ε`.

mod diagnostics;
mod optimize;
mod targets;

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evolution::{Dynamics, HeatStepper, WaveStepper};
use crate::fracops::FracOperator;
use crate::lattice::{norm_h1, norm_h2, Cutoff, CutoffProfile, RegionPartition, SpaceTimeField, SpaceTimeInner, TimeGrid};

pub use diagnostics::{
    auxiliary_functional_gap, cost_sweep, fit_cost_law, gramian_svd, AuxiliaryGap, CostLaw, CostRow, CostSweep,
    GramianSpectrum,
};
pub use optimize::{
    evaluate_functional, forward_response, minimize, minimize_from, operator_norm, verify_approximation, Certificate, ControlResult,
    ControlSummary, IterationRecord, PowerEstimate, Verification,
};
pub use targets::{check_target, Regularity, TargetProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equation {
    #[default]
    Heat,
    Wave,
}

impl Equation {
    pub fn regularity(self) -> Regularity {
        match self {
            Equation::Heat => Regularity::H1,
            Equation::Wave => Regularity::H2,
        }
    }
}

/// Accelerated proximal gradient settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    pub max_iterations: usize,
    /// Bound on `‖v_{k+1} − v_k‖ / max(‖v_k‖, 1)`.
    pub tolerance: f64,
    /// Relative slack allowed in the certificate identities.
    pub certificate_tolerance: f64,
    pub power_iterations: usize,
    /// Gradient-based adaptive restart of the momentum.
    pub restart: bool,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200_000,
            tolerance: 1e-8,
            certificate_tolerance: 1e-6,
            power_iterations: 200,
            restart: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlConfig {
    pub equation: Equation,
    pub epsilon: f64,
    /// θ of the heat scheme; ignored for the wave equation.
    pub theta: f64,
    pub optimizer: OptimizerSettings,
    /// Seed for randomised spot checks.
    pub seed: u64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            equation: Equation::Heat,
            epsilon: 0.0,
            theta: 1.0,
            optimizer: OptimizerSettings::default(),
            seed: 0,
        }
    }
}

/// Everything shared by the runs on one target: operator blocks, time
/// stepper, cutoff and target, all read-only.
#[derive(Clone)]
pub struct ControlContext {
    op: FracOperator,
    partition: RegionPartition,
    time: TimeGrid,
    config: ControlConfig,
    dynamics: Arc<dyn Dynamics + Send>,
    /// `η` on the control nodes.
    eta: Vec<f64>,
    target: DMatrix<f64>,
    target_field: SpaceTimeField,
    inner: SpaceTimeInner,
}

impl std::fmt::Debug for ControlContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlContext")
            .field("config", &self.config)
            .field("interior", &self.partition.interior().len())
            .field("control", &self.partition.control().len())
            .field("levels", &self.time.levels())
            .finish()
    }
}

impl ControlContext {
    pub fn new(
        op: &FracOperator,
        partition: &RegionPartition,
        target: &SpaceTimeField,
        config: ControlConfig,
    ) -> Result<Self> {
        let grid = op.grid();
        if partition.shape() != grid.shape() {
            return Err(Error::ShapeMismatch("partition built on a different grid".into()));
        }
        if partition.interior().is_empty() {
            return Err(Error::EmptyMask);
        }
        if !partition.has_control() {
            return Err(Error::InvalidRegion("the control region W is empty".into()));
        }
        if !(config.epsilon > 0.0 && config.epsilon.is_finite()) {
            return Err(invalid("epsilon", format!("must be positive, got {}", config.epsilon)));
        }
        let s = &config.optimizer;
        if !(s.tolerance > 0.0) || !(s.certificate_tolerance > 0.0) || s.max_iterations == 0 || s.power_iterations == 0 {
            return Err(invalid("optimizer", "tolerances and iteration limits must be positive"));
        }
        check_target(grid, partition, target, config.equation.regularity())?;
        let time = target.time_grid();
        let dynamics: Arc<dyn Dynamics + Send> = match config.equation {
            Equation::Heat => Arc::new(HeatStepper::new(op, partition, time, config.theta)?),
            Equation::Wave => Arc::new(WaveStepper::new(op, partition, time)?),
        };
        let eta = Cutoff::new(grid, partition, CutoffProfile::Quintic)?.on_control(partition);
        Ok(Self {
            op: op.clone(),
            partition: partition.clone(),
            time,
            config,
            dynamics,
            eta,
            target: target.gather(partition.interior()),
            target_field: target.clone(),
            inner: SpaceTimeInner::new(grid, time),
        })
    }

    /// Same context with another `ε`.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid("epsilon", format!("must be positive, got {epsilon}")));
        }
        let mut ctx = self.clone();
        ctx.config.epsilon = epsilon;
        Ok(ctx)
    }

    pub fn op(&self) -> &FracOperator {
        &self.op
    }

    pub fn partition(&self) -> &RegionPartition {
        &self.partition
    }

    pub fn time(&self) -> TimeGrid {
        self.time
    }

    pub fn config(&self) -> &ControlConfig {
        &self.config
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    /// Target on the interior mask, one column per level.
    pub fn target(&self) -> &DMatrix<f64> {
        &self.target
    }

    pub fn target_field(&self) -> &SpaceTimeField {
        &self.target_field
    }

    /// Weighted space-time inner product, on either mask.
    pub fn dot(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        self.inner.dot(a, b)
    }

    pub fn norm(&self, a: &DMatrix<f64>) -> f64 {
        self.inner.norm(a)
    }

    pub fn target_norm(&self) -> f64 {
        self.norm(&self.target)
    }

    /// `‖h‖_{H¹}` for heat targets, `‖h‖_{H²}` for wave targets.
    pub fn target_regularity_norm(&self) -> Result<f64> {
        let grid = self.op.grid();
        let range = 0..=self.time.steps();
        match self.config.equation {
            Equation::Heat => norm_h1(grid, &self.target_field, self.partition.interior(), range),
            Equation::Wave => norm_h2(grid, &self.target_field, self.partition.interior(), range),
        }
    }

    pub fn interior_zeros(&self) -> DMatrix<f64> {
        DMatrix::zeros(self.partition.interior().len(), self.time.levels())
    }

    pub fn control_zeros(&self) -> DMatrix<f64> {
        DMatrix::zeros(self.partition.control().len(), self.time.levels())
    }

    /// `φ_v` on the interior mask.
    pub fn adjoint_state(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        self.dynamics.propagate_adjoint(v)
    }

    /// Scatters a control-mask matrix to a full-grid field.
    pub fn control_field(&self, f: &DMatrix<f64>) -> Result<SpaceTimeField> {
        SpaceTimeField::scatter(self.op.grid(), self.time, self.partition.control(), f)
    }

    /// Scatters an interior-mask matrix to a full-grid field.
    pub fn interior_field(&self, v: &DMatrix<f64>) -> Result<SpaceTimeField> {
        SpaceTimeField::scatter(self.op.grid(), self.time, self.partition.interior(), v)
    }

    fn check_interior(&self, v: &DMatrix<f64>) -> Result<()> {
        if v.shape() != (self.partition.interior().len(), self.time.levels()) {
            return Err(Error::ShapeMismatch(format!("interior field of shape {:?}", v.shape())));
        }
        Ok(())
    }

    fn check_control(&self, w: &DMatrix<f64>) -> Result<()> {
        if w.shape() != (self.partition.control().len(), self.time.levels()) {
            return Err(Error::ShapeMismatch(format!("control field of shape {:?}", w.shape())));
        }
        Ok(())
    }

    fn scale_rows(&self, mut w: DMatrix<f64>) -> DMatrix<f64> {
        for (mut row, e) in w.row_iter_mut().zip(&self.eta) {
            row *= *e;
        }
        w
    }
}

/// `K v = η · (A_WB φ_v)` on the control mask.
pub fn apply_k(v: &DMatrix<f64>, ctx: &ControlContext) -> Result<DMatrix<f64>> {
    ctx.check_interior(v)?;
    Ok(apply_k_unchecked(v, ctx))
}

fn apply_k_unchecked(v: &DMatrix<f64>, ctx: &ControlContext) -> DMatrix<f64> {
    let phi = ctx.dynamics.propagate_adjoint(v);
    ctx.scale_rows(ctx.dynamics.coupling().exterior_action(&phi))
}

/// `K* w = −P(η w)` on the interior mask.
pub fn apply_k_star(w: &DMatrix<f64>, ctx: &ControlContext) -> Result<DMatrix<f64>> {
    ctx.check_control(w)?;
    Ok(apply_k_star_unchecked(w, ctx))
}

fn apply_k_star_unchecked(w: &DMatrix<f64>, ctx: &ControlContext) -> DMatrix<f64> {
    let c = ctx.dynamics.coupling();
    ctx.dynamics.propagate(&(&c.a_bw * ctx.scale_rows(w.clone())))
}
