//! Exterior control of the fractional heat and wave equations.
//!
//! The crate discretises the restricted fractional Laplacian on a box,
//! solves forward and adjoint evolution problems with data prescribed on an
//! exterior control region `W`, and synthesises controls by minimising the
//! penalised dual energy
//!
//! ```text
//! J_ε(v) = ½‖η (−Δ)^s φ_v‖²_{L²(W×T)} + ε‖v‖_{L²(B×T)} − (h, v)_{L²(B×T)}
//! ```
//!
//! whose minimiser `v̂` yields the control `f = −η² (−Δ)^s φ̂` with
//! `‖P f − h‖ ≤ ε`. A Caffarelli–Silvestre extension solver validates the
//! operator and feeds propagation-of-smallness diagnostics.

pub mod control;
pub mod error;
pub mod evolution;
pub mod extension;
pub mod fracops;
pub mod lattice;
mod quad;
pub mod rng;

pub use error::{Error, Result};
pub use control::{ControlConfig, ControlContext, ControlResult, Equation, OptimizerSettings, TargetProfile};
pub use extension::{HalfStripGrid, SmallnessConfig, StripConfig};
pub use fracops::{assemble, FracOperator};
pub use lattice::{Cutoff, Grid, Region, RegionPartition, RegionSpec, SpaceTimeField, TimeGrid};
