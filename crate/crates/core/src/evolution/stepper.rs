use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::fracops::FracOperator;
use crate::lattice::{RegionPartition, TimeGrid};

/// Linear evolution on interior nodes driven by a forcing `g`.
///
/// Matrices have one row per interior node and one column per time level.
/// `propagate_adjoint` is the exact transpose of `propagate` in the weighted
/// inner product `hx^d Σ_k w_k a_k · b_k`, so that
/// `⟨propagate(g), ψ⟩ = ⟨g, propagate_adjoint(ψ)⟩` up to rounding.
pub trait Dynamics: Sync {
    fn coupling(&self) -> &Coupling;

    fn propagate(&self, g: &DMatrix<f64>) -> DMatrix<f64>;

    fn propagate_adjoint(&self, psi: &DMatrix<f64>) -> DMatrix<f64>;
}

/// Interior/exterior blocks of the operator and the time quadrature shared
/// by every stepper.
#[derive(Debug, Clone)]
pub struct Coupling {
    pub interior: Vec<usize>,
    pub control: Vec<usize>,
    pub a_bb: DMatrix<f64>,
    /// `A` restricted to interior rows and control columns.
    pub a_bw: DMatrix<f64>,
    pub time: TimeGrid,
    pub weights: Vec<f64>,
    pub cell_volume: f64,
}

impl Coupling {
    pub fn new(op: &FracOperator, partition: &RegionPartition, time: TimeGrid) -> Result<Self> {
        if partition.shape() != op.grid().shape() {
            return Err(Error::ShapeMismatch("partition built on a different grid".into()));
        }
        let interior = partition.interior().to_vec();
        let control = partition.control().to_vec();
        Ok(Self {
            a_bb: op.block(&interior, &interior),
            a_bw: op.block(&interior, &control),
            interior,
            control,
            time,
            weights: time.trapezoid_weights(),
            cell_volume: op.grid().cell_volume(),
        })
    }

    /// `F − A_BW f` for exterior data `f` (control rows) and interior source `F`.
    pub fn forcing(&self, exterior: Option<&DMatrix<f64>>, source: Option<&DMatrix<f64>>) -> DMatrix<f64> {
        let mut g = match source {
            Some(s) => s.clone(),
            None => DMatrix::zeros(self.interior.len(), self.time.levels()),
        };
        if let Some(f) = exterior {
            if !self.control.is_empty() {
                g -= &self.a_bw * f;
            }
        }
        g
    }

    /// `A_WB φ` on control rows.
    pub fn exterior_action(&self, phi: &DMatrix<f64>) -> DMatrix<f64> {
        self.a_bw.transpose() * phi
    }

    pub fn dot(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let mut s = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            s += w * a.column(k).dot(&b.column(k));
        }
        s * self.cell_volume
    }
}

/// One step `x ↦ S x` and the resolvent `x ↦ M₊^{-1} x` of a θ-scheme, with
/// their transposes.
#[derive(Debug, Clone)]
enum ThetaOps {
    Dense {
        step: DMatrix<f64>,
        step_t: DMatrix<f64>,
        inv: DMatrix<f64>,
        inv_t: DMatrix<f64>,
    },
    Diagonal {
        step: DVector<f64>,
        inv: DVector<f64>,
    },
}

impl ThetaOps {
    fn step(&self, x: &DVector<f64>, transpose: bool) -> DVector<f64> {
        match self {
            ThetaOps::Dense { step, step_t, .. } => (if transpose { step_t } else { step }) * x,
            ThetaOps::Diagonal { step, .. } => step.component_mul(x),
        }
    }

    fn inv(&self, x: &DVector<f64>, transpose: bool) -> DVector<f64> {
        match self {
            ThetaOps::Dense { inv, inv_t, .. } => (if transpose { inv_t } else { inv }) * x,
            ThetaOps::Diagonal { inv, .. } => inv.component_mul(x),
        }
    }

    fn dim(&self) -> usize {
        match self {
            ThetaOps::Dense { inv, .. } => inv.nrows(),
            ThetaOps::Diagonal { inv, .. } => inv.len(),
        }
    }

    fn forward(&self, g: &DMatrix<f64>, v0: Option<&DVector<f64>>, dt: f64, theta: f64) -> DMatrix<f64> {
        let levels = g.ncols();
        let mut v = DMatrix::zeros(self.dim(), levels);
        if let Some(v0) = v0 {
            v.set_column(0, v0);
        }
        for k in 0..levels - 1 {
            let r = g.column(k + 1) * theta + g.column(k) * (1.0 - theta);
            let next = self.step(&v.column(k).into_owned(), false) + self.inv(&r, false) * dt;
            v.set_column(k + 1, &next);
        }
        v
    }

    fn adjoint(&self, psi: &DMatrix<f64>, weights: &[f64], dt: f64, theta: f64) -> DMatrix<f64> {
        let levels = psi.ncols();
        let m = levels - 1;
        let dim = self.dim();
        // p_j = w_j ψ_j + Sᵀ p_{j+1}
        let mut p = DMatrix::zeros(dim, levels);
        p.set_column(m, &(psi.column(m) * weights[m]));
        for j in (1..m).rev() {
            let next = self.step(&p.column(j + 1).into_owned(), true) + psi.column(j) * weights[j];
            p.set_column(j, &next);
        }
        let mut phi = DMatrix::zeros(dim, levels);
        for j in 0..=m {
            let mut r = DVector::zeros(dim);
            if j >= 1 {
                r += p.column(j) * theta;
            }
            if j < m {
                r += p.column(j + 1) * (1.0 - theta);
            }
            let col = self.inv(&r, true) * (dt / weights[j]);
            phi.set_column(j, &col);
        }
        phi
    }
}

/// θ-scheme `(v^{k+1} − v^k)/Δt + A(θv^{k+1} + (1−θ)v^k) = θg^{k+1} + (1−θ)g^k`.
#[derive(Debug, Clone)]
pub struct HeatStepper {
    coupling: Coupling,
    theta: f64,
    ops: ThetaOps,
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if (0.5..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(invalid("theta", format!("must lie in [1/2, 1], got {theta}")))
    }
}

fn spd_inverse(m: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::SingularSystem(format!("{what} is not positive definite")))
}

impl HeatStepper {
    pub fn new(op: &FracOperator, partition: &RegionPartition, time: TimeGrid, theta: f64) -> Result<Self> {
        check_theta(theta)?;
        let coupling = Coupling::new(op, partition, time)?;
        let dt = time.dt();
        let nb = coupling.interior.len();
        let id = DMatrix::<f64>::identity(nb, nb);
        let plus = &id + &coupling.a_bb * (theta * dt);
        let minus = &id - &coupling.a_bb * ((1.0 - theta) * dt);
        let inv = spd_inverse(plus, "I + θΔt A_BB")?;
        let step = &inv * minus;
        let ops = ThetaOps::Dense {
            step_t: step.transpose(),
            inv_t: inv.transpose(),
            step,
            inv,
        };
        Ok(Self { coupling, theta, ops })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Forward run from interior initial data `v0`.
    pub fn propagate_from(&self, g: &DMatrix<f64>, v0: Option<&DVector<f64>>) -> DMatrix<f64> {
        self.ops.forward(g, v0, self.coupling.time.dt(), self.theta)
    }
}

impl Dynamics for HeatStepper {
    fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    fn propagate(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        self.propagate_from(g, None)
    }

    fn propagate_adjoint(&self, psi: &DMatrix<f64>) -> DMatrix<f64> {
        self.ops
            .adjoint(psi, &self.coupling.weights, self.coupling.time.dt(), self.theta)
    }
}

/// The same θ-scheme applied mode by mode in a truncated eigenbasis `Φ`,
/// orthonormal in the `hx^d`-weighted inner product.
#[derive(Debug, Clone)]
pub struct ModalHeatStepper {
    coupling: Coupling,
    theta: f64,
    basis: DMatrix<f64>,
    ops: ThetaOps,
}

impl ModalHeatStepper {
    pub fn new(coupling: Coupling, values: &[f64], basis: DMatrix<f64>, theta: f64) -> Result<Self> {
        check_theta(theta)?;
        if basis.nrows() != coupling.interior.len() || basis.ncols() != values.len() {
            return Err(Error::ShapeMismatch("eigenbasis does not match the interior mask".into()));
        }
        let dt = coupling.time.dt();
        let inv = DVector::from_iterator(values.len(), values.iter().map(|l| 1.0 / (1.0 + theta * dt * l)));
        let step = DVector::from_iterator(
            values.len(),
            values.iter().map(|l| (1.0 - (1.0 - theta) * dt * l) / (1.0 + theta * dt * l)),
        );
        Ok(Self {
            coupling,
            theta,
            basis,
            ops: ThetaOps::Diagonal { step, inv },
        })
    }

    fn project(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        self.basis.transpose() * g * self.coupling.cell_volume
    }
}

impl Dynamics for ModalHeatStepper {
    fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    fn propagate(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        let alpha = self.ops.forward(&self.project(g), None, self.coupling.time.dt(), self.theta);
        &self.basis * alpha
    }

    fn propagate_adjoint(&self, psi: &DMatrix<f64>) -> DMatrix<f64> {
        let dt = self.coupling.time.dt();
        let beta = self.ops.adjoint(&self.project(psi), &self.coupling.weights, dt, self.theta);
        &self.basis * beta
    }
}

/// Implicit midpoint on the first-order system `u' = w`, `w' = −A u + g`.
#[derive(Debug, Clone)]
pub struct WaveStepper {
    coupling: Coupling,
    /// `Q^{-1}` with `Q = I + Δt²/4 A`.
    q_inv: DMatrix<f64>,
    /// `Q^{-1}(I − Δt²/4 A)`.
    r: DMatrix<f64>,
    q_inv_a: DMatrix<f64>,
}

impl WaveStepper {
    pub fn new(op: &FracOperator, partition: &RegionPartition, time: TimeGrid) -> Result<Self> {
        let coupling = Coupling::new(op, partition, time)?;
        let dt = time.dt();
        let nb = coupling.interior.len();
        let id = DMatrix::<f64>::identity(nb, nb);
        let quarter = &coupling.a_bb * (0.25 * dt * dt);
        let q_inv = spd_inverse(&id + &quarter, "I + Δt²/4 A_BB")?;
        let r = &q_inv * (&id - &quarter);
        let q_inv_a = &q_inv * &coupling.a_bb;
        Ok(Self {
            coupling,
            q_inv,
            r,
            q_inv_a,
        })
    }

    /// Forward run from interior displacement `u0` and velocity `w0`;
    /// returns `(u, w)` over all levels.
    pub fn propagate_from(
        &self,
        g: &DMatrix<f64>,
        u0: Option<&DVector<f64>>,
        w0: Option<&DVector<f64>>,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let dt = self.coupling.time.dt();
        let levels = g.ncols();
        let nb = self.coupling.interior.len();
        let mut u = DMatrix::zeros(nb, levels);
        let mut w = DMatrix::zeros(nb, levels);
        if let Some(u0) = u0 {
            u.set_column(0, u0);
        }
        if let Some(w0) = w0 {
            w.set_column(0, w0);
        }
        for k in 0..levels - 1 {
            let gbar = (g.column(k) + g.column(k + 1)) * 0.5;
            let wk = w.column(k).into_owned();
            let uk = u.column(k).into_owned();
            let wn = &self.r * &wk - &self.q_inv_a * &uk * dt + &self.q_inv * gbar * dt;
            let un = uk + (&wn + &wk) * (0.5 * dt);
            w.set_column(k + 1, &wn);
            u.set_column(k + 1, &un);
        }
        (u, w)
    }

    /// Interior energy `½‖w‖² + ½ uᵀ A u`, `hx^d`-weighted, per level.
    pub fn energy(&self, u: &DMatrix<f64>, w: &DMatrix<f64>) -> Vec<f64> {
        let vol = self.coupling.cell_volume;
        (0..u.ncols())
            .map(|k| {
                let uk = u.column(k);
                let wk = w.column(k);
                0.5 * vol * (wk.dot(&wk) + uk.dot(&(&self.coupling.a_bb * uk)))
            })
            .collect()
    }
}

impl Dynamics for WaveStepper {
    fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    fn propagate(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        self.propagate_from(g, None, None).0
    }

    fn propagate_adjoint(&self, psi: &DMatrix<f64>) -> DMatrix<f64> {
        let dt = self.coupling.time.dt();
        let weights = &self.coupling.weights;
        let levels = psi.ncols();
        let m = levels - 1;
        let nb = psi.nrows();
        // transposed state recursion π_j = (w_j ψ_j, 0) + Tᵀ π_{j+1}; every
        // block of T is a symmetric function of A_BB
        let mut a = psi.column(m) * weights[m];
        let mut b = DVector::zeros(nb);
        let mut q = DMatrix::zeros(nb, levels);
        let bt = |a: &DVector<f64>, b: &DVector<f64>| &self.q_inv * a * (0.5 * dt * dt) + &self.q_inv * b * dt;
        q.set_column(m - 1, &bt(&a, &b));
        for j in (1..m).rev() {
            let na = &a - &self.q_inv_a * &a * (0.5 * dt * dt) - &self.q_inv_a * &b * dt
                + psi.column(j) * weights[j];
            let nb_ = (&self.r * &a + &a) * (0.5 * dt) + &self.r * &b;
            a = na;
            b = nb_;
            q.set_column(j - 1, &bt(&a, &b));
        }
        let mut phi = DMatrix::zeros(nb, levels);
        for j in 0..=m {
            let mut r = DVector::zeros(nb);
            if j >= 1 {
                r += q.column(j - 1);
            }
            if j < m {
                r += q.column(j);
            }
            phi.set_column(j, &(r * (0.5 / weights[j])));
        }
        phi
    }
}
