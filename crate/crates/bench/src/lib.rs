//! Fixtures shared by the benchmarks.

use fracheat::{
    assemble, ControlConfig, ControlContext, Equation, FracOperator, Grid, RegionPartition, RegionSpec,
    TargetProfile, TimeGrid,
};

/// Operator and partition on `[-4, 4]` with control region `[1.5, 2.5]`.
pub fn desk(points: usize, s: f64) -> (FracOperator, RegionPartition) {
    let grid = Grid::new(1, 4.0, points).expect("grid");
    let op = assemble(&grid, s).expect("operator");
    let part = RegionPartition::new(&grid, &RegionSpec::intervals(&[(1.5, 2.5)])).expect("partition");
    (op, part)
}

/// Heat control problem for the H¹ bump with `ε = ratio·‖h‖`.
pub fn heat_context(op: &FracOperator, part: &RegionPartition, steps: usize, ratio: f64) -> ControlContext {
    let time = TimeGrid::new(steps).expect("time grid");
    let h = TargetProfile::H1Bump.build(op.grid(), part, time);
    let config = ControlConfig {
        equation: Equation::Heat,
        epsilon: 1.0,
        ..ControlConfig::default()
    };
    let ctx = ControlContext::new(op, part, &h, config).expect("context");
    ctx.with_epsilon(ratio * ctx.target_norm()).expect("epsilon")
}
