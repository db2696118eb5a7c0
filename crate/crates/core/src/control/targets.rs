use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{Grid, NodeKind, RegionPartition, SpaceTimeField, TimeGrid};

/// Vanishing order a target must have at the edge of the interior mask and
/// at `t = ±1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularity {
    H1,
    H2,
}

/// Bundled separable targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetProfile {
    /// `cos(π|x|/2) cos(πt/2)` in 1D, the product over axes in 2D.
    H1Bump,
    /// The square of [`TargetProfile::H1Bump`].
    H2Bump,
}

impl TargetProfile {
    pub fn regularity(self) -> Regularity {
        match self {
            TargetProfile::H1Bump => Regularity::H1,
            TargetProfile::H2Bump => Regularity::H2,
        }
    }

    /// Samples the profile on the interior mask; zero elsewhere.
    pub fn build(self, grid: &Grid, partition: &RegionPartition, time: TimeGrid) -> SpaceTimeField {
        let power = match self {
            TargetProfile::H1Bump => 1,
            TargetProfile::H2Bump => 2,
        };
        let mut field = SpaceTimeField::from_fn(grid, time, |x, t| {
            let space: f64 = x[..grid.dim()].iter().map(|c| (0.5 * PI * c).cos()).product();
            (space * (0.5 * PI * t).cos()).powi(power)
        });
        for k in 0..time.levels() {
            let level = field.level_mut(k);
            for (node, v) in level.iter_mut().enumerate() {
                if partition.kind(node) != NodeKind::Interior {
                    *v = 0.0;
                }
            }
        }
        // cos(±π/2) leaves rounding noise at the time ends
        for k in [0, time.steps()] {
            field.level_mut(k).iter_mut().for_each(|v| *v = 0.0);
        }
        field
    }
}

/// Checks that `h` lives on the interior mask and vanishes at the mask
/// edge and at `t = ±1` to the requested order.
///
/// Discrete form: edge values are bounded by `4 h^r` times the largest
/// `r`-th difference quotient inside, in space and in time.
pub fn check_target(grid: &Grid, partition: &RegionPartition, h: &SpaceTimeField, regularity: Regularity) -> Result<()> {
    h.check_grid(grid)?;
    let time = h.time_grid();
    for k in 0..h.levels() {
        for (node, v) in h.level(k).iter().enumerate() {
            if *v != 0.0 && partition.kind(node) != NodeKind::Interior {
                return Err(Error::InvalidRegion(format!(
                    "target is nonzero off the interior mask at node {node}, level {k}"
                )));
            }
        }
    }
    let interior = partition.interior();
    let peak = h.max_abs();
    if peak == 0.0 {
        return Ok(());
    }
    let order = match regularity {
        Regularity::H1 => 1,
        Regularity::H2 => 2,
    };
    let fail = |what: &str| {
        Err(invalid(
            "target",
            format!("does not vanish to {regularity:?} order at {what}; bundled profiles satisfy this by construction"),
        ))
    };
    // time
    let dt = time.dt();
    let m = time.steps();
    let tq = (0..=m.saturating_sub(order))
        .flat_map(|k| interior.iter().map(move |&i| (k, i)))
        .map(|(k, i)| difference(|j| h.get(k + j, i), order) / dt.powi(order as i32))
        .fold(0.0f64, |a, b| a.max(b.abs()));
    for k in (0..order).chain(m + 1 - order..=m) {
        let bound = if k == 0 || k == m { 1e-10 * peak } else { 4.0 * dt.powi(order as i32) * tq + 1e-10 * peak };
        if interior.iter().any(|&i| h.get(k, i).abs() > bound) {
            return fail("t = ±1");
        }
    }
    // space, along every axis through the zero extension
    let hx = grid.spacing();
    let n = grid.points_per_axis() as isize;
    let inside = |idx: [isize; 2]| -> Option<usize> {
        if idx[0] < 0 || idx[0] >= n || idx[1] < 0 || idx[1] >= n {
            return None;
        }
        let k = grid.flat_index([idx[0] as usize, idx[1] as usize]);
        (partition.kind(k) == NodeKind::Interior).then_some(k)
    };
    for axis in 0..grid.dim() {
        let mut quotient = 0.0f64;
        let mut edge = Vec::new();
        for &i in interior {
            let base = grid.multi_index(i).map(|c| c as isize);
            let at = |step: isize| {
                let mut idx = base;
                idx[axis] += step;
                inside(idx)
            };
            let ok = (1..=order as isize).all(|st| at(st).is_some());
            if ok {
                for k in 0..h.levels() {
                    let d = difference(|j| at(j as isize).map_or(0.0, |node| h.get(k, node)), order);
                    quotient = quotient.max(d.abs() / hx.powi(order as i32));
                }
            }
            if (1..=order as isize).any(|st| at(st).is_none() || at(-st).is_none()) {
                edge.push(i);
            }
        }
        let bound = 4.0 * hx.powi(order as i32) * quotient + 1e-10 * peak;
        if edge.iter().any(|&i| (0..h.levels()).any(|k| h.get(k, i).abs() > bound)) {
            return fail("the edge of the interior mask");
        }
    }
    Ok(())
}

/// Forward difference of order 1 or 2 starting at offset 0.
fn difference(f: impl Fn(usize) -> f64, order: usize) -> f64 {
    match order {
        1 => f(1) - f(0),
        _ => f(2) - 2.0 * f(1) + f(0),
    }
}
