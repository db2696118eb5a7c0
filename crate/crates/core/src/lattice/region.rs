use serde::{Deserialize, Serialize};

use super::grid::{Grid, GridShape};
use crate::error::{Error, Result};

/// Closed axis-aligned box; `y` is ignored on 1D grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<[f64; 2]>,
}

impl Region {
    pub fn interval(a: f64, b: f64) -> Self {
        Self { x: [a, b], y: None }
    }

    pub fn rect(x: [f64; 2], y: [f64; 2]) -> Self {
        Self { x, y: Some(y) }
    }

    fn y_or_point(&self) -> [f64; 2] {
        self.y.unwrap_or([0.0, 0.0])
    }

    /// Strict membership (node-centre rule: boundary ties are excluded).
    fn contains_strictly(&self, p: [f64; 2], dim: usize, tol: f64) -> bool {
        let inside = |v: f64, [a, b]: [f64; 2]| v > a + tol && v < b - tol;
        inside(p[0], self.x) && (dim == 1 || inside(p[1], self.y_or_point()))
    }

    /// Euclidean distance from the box to the origin.
    fn distance_to_origin(&self, dim: usize) -> f64 {
        let gap = |[a, b]: [f64; 2]| {
            if a > 0.0 {
                a
            } else if b < 0.0 {
                -b
            } else {
                0.0
            }
        };
        let dx = gap(self.x);
        if dim == 1 {
            dx
        } else {
            dx.hypot(gap(self.y_or_point()))
        }
    }

    /// Distance from an interior point to the box boundary.
    fn inner_distance(&self, p: [f64; 2], dim: usize) -> f64 {
        let d = |v: f64, [a, b]: [f64; 2]| (v - a).min(b - v);
        let dx = d(p[0], self.x);
        if dim == 1 {
            dx
        } else {
            dx.min(d(p[1], self.y_or_point()))
        }
    }

    /// Largest inner distance attained in the box (its inradius).
    fn inradius(&self, dim: usize) -> f64 {
        let hx = 0.5 * (self.x[1] - self.x[0]);
        if dim == 1 {
            hx
        } else {
            let [c, d] = self.y_or_point();
            hx.min(0.5 * (d - c))
        }
    }

    fn min_width(&self, dim: usize) -> f64 {
        2.0 * self.inradius(dim)
    }

    fn overlaps(&self, other: &Region, dim: usize) -> bool {
        let ov = |[a, b]: [f64; 2], [c, d]: [f64; 2]| a <= d && c <= b;
        ov(self.x, other.x) && (dim == 1 || ov(self.y_or_point(), other.y_or_point()))
    }
}

/// Union of closed boxes describing the control region `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub components: Vec<Region>,
}

impl RegionSpec {
    pub fn new(components: Vec<Region>) -> Self {
        Self { components }
    }

    pub fn intervals(list: &[(f64, f64)]) -> Self {
        Self::new(list.iter().map(|&(a, b)| Region::interval(a, b)).collect())
    }

    /// Validates the geometry and returns the disjoint components; in 1D
    /// overlapping intervals are merged, in 2D boxes must be separated.
    fn normalized(&self, grid: &Grid) -> Result<Vec<Region>> {
        let dim = grid.dim();
        let hx = grid.spacing();
        let l = grid.half_width();
        if self.components.is_empty() {
            return Err(Error::InvalidRegion("no components given".into()));
        }
        for r in &self.components {
            let axes: Vec<[f64; 2]> = if dim == 1 {
                vec![r.x]
            } else {
                let y = r.y.ok_or_else(|| {
                    Error::InvalidRegion("2D regions need a y-interval".into())
                })?;
                vec![r.x, y]
            };
            for [a, b] in axes {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(Error::InvalidRegion(format!("degenerate interval [{a}, {b}]")));
                }
                if a <= -l || b >= l {
                    return Err(Error::InvalidRegion(format!(
                        "[{a}, {b}] is not inside the open box (-{l}, {l})"
                    )));
                }
            }
            let gap = r.distance_to_origin(dim) - 1.0;
            if gap < 2.0 * hx - 1e-12 * hx {
                return Err(Error::InvalidRegion(format!(
                    "component {:?} is within {gap:.4} of the closed unit ball (need at least 2hx = {:.4})",
                    r,
                    2.0 * hx
                )));
            }
        }
        if dim == 1 {
            let mut iv: Vec<[f64; 2]> = self.components.iter().map(|r| r.x).collect();
            iv.sort_by(|a, b| a[0].total_cmp(&b[0]));
            let mut merged: Vec<[f64; 2]> = Vec::new();
            for [a, b] in iv {
                match merged.last_mut() {
                    Some(last) if a <= last[1] => last[1] = last[1].max(b),
                    _ => merged.push([a, b]),
                }
            }
            Ok(merged.into_iter().map(|[a, b]| Region::interval(a, b)).collect())
        } else {
            let c = &self.components;
            for i in 0..c.len() {
                for j in i + 1..c.len() {
                    if c[i].overlaps(&c[j], dim) {
                        return Err(Error::InvalidRegion(
                            "2D control boxes must be pairwise disjoint".into(),
                        ));
                    }
                }
            }
            Ok(c.clone())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Interior,
    Control,
    Zero,
}

/// Partition of the grid nodes into the interior `B = {|x| < 1}`, the control
/// region `W` and the remaining (zero) nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPartition {
    shape: GridShape,
    kinds: Vec<NodeKind>,
    interior: Vec<usize>,
    control: Vec<usize>,
    zero: Vec<usize>,
    components: Vec<Region>,
}

impl RegionPartition {
    pub fn new(grid: &Grid, spec: &RegionSpec) -> Result<Self> {
        let components = spec.normalized(grid)?;
        Self::build(grid, components)
    }

    /// Partition without a control region (operator-only runs).
    pub fn interior_only(grid: &Grid) -> Result<Self> {
        Self::build(grid, Vec::new())
    }

    fn build(grid: &Grid, components: Vec<Region>) -> Result<Self> {
        let tol = 1e-9 * grid.spacing();
        let dim = grid.dim();
        let mut kinds = Vec::with_capacity(grid.node_count());
        let (mut interior, mut control, mut zero) = (Vec::new(), Vec::new(), Vec::new());
        for k in 0..grid.node_count() {
            let p = grid.coords(k);
            let kind = if grid.norm_of(k) < 1.0 - tol {
                NodeKind::Interior
            } else if components.iter().any(|r| r.contains_strictly(p, dim, tol)) {
                NodeKind::Control
            } else {
                NodeKind::Zero
            };
            match kind {
                NodeKind::Interior => interior.push(k),
                NodeKind::Control => control.push(k),
                NodeKind::Zero => zero.push(k),
            }
            kinds.push(kind);
        }
        if interior.is_empty() {
            return Err(Error::InvalidRegion("interior mask is empty".into()));
        }
        if !components.is_empty() && control.is_empty() {
            return Err(Error::InvalidRegion(
                "control region contains no grid nodes".into(),
            ));
        }
        Ok(Self {
            shape: grid.shape(),
            kinds,
            interior,
            control,
            zero,
            components,
        })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        self.kinds[node]
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn control(&self) -> &[usize] {
        &self.control
    }

    pub fn zero(&self) -> &[usize] {
        &self.zero
    }

    pub fn components(&self) -> &[Region] {
        &self.components
    }

    pub fn has_control(&self) -> bool {
        !self.control.is_empty()
    }

    /// Number of connected runs of control nodes along the first axis (1D).
    pub fn control_runs(&self) -> usize {
        let mut runs = 0;
        let mut prev: Option<usize> = None;
        for &k in &self.control {
            if prev.map_or(true, |p| k != p + 1) {
                runs += 1;
            }
            prev = Some(k);
        }
        runs
    }
}

/// C² ramp on `[0, 1]`: `6τ⁵ − 15τ⁴ + 10τ³`, clamped outside.
pub fn smooth_ramp(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffProfile {
    /// Quintic C² ramp between `∂W` and `∂(W/2)`.
    #[default]
    Quintic,
}

/// Smooth cutoff `η` with `η = 0` off `W` and `η = 1` on `W/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cutoff {
    values: Vec<f64>,
    half_depth: f64,
}

impl Cutoff {
    pub fn new(grid: &Grid, partition: &RegionPartition, profile: CutoffProfile) -> Result<Self> {
        let CutoffProfile::Quintic = profile;
        let dim = grid.dim();
        let hx = grid.spacing();
        let comps = partition.components();
        if comps.is_empty() {
            return Err(Error::UnresolvedCutoff("partition has no control region".into()));
        }
        for r in comps {
            if r.min_width(dim) < 2.0 * hx {
                return Err(Error::UnresolvedCutoff(format!(
                    "component {:?} is thinner than 2hx = {:.4}",
                    r,
                    2.0 * hx
                )));
            }
        }
        // W/2 uses the largest inner distance over all of W, not per component
        let depth = comps.iter().map(|r| r.inradius(dim)).fold(0.0, f64::max);
        let half_depth = 0.5 * depth;
        let mut values = vec![0.0; grid.node_count()];
        for &k in partition.control() {
            let p = grid.coords(k);
            let d = comps
                .iter()
                .filter(|r| r.contains_strictly(p, dim, 0.0))
                .map(|r| r.inner_distance(p, dim))
                .fold(0.0, f64::max);
            values[k] = if d > half_depth { 1.0 } else { smooth_ramp(d / half_depth) };
        }
        Ok(Self { values, half_depth })
    }

    /// Values at every grid node.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values at the control nodes, in partition order.
    pub fn on_control(&self, partition: &RegionPartition) -> Vec<f64> {
        partition.control().iter().map(|&k| self.values[k]).collect()
    }

    /// Threshold distance to `∂W` above which a node lies in `W/2`.
    pub fn half_depth(&self) -> f64 {
        self.half_depth
    }

    /// Whether a control node belongs to `W/2`.
    pub fn in_half_region(&self, grid: &Grid, partition: &RegionPartition, node: usize) -> bool {
        if partition.kind(node) != NodeKind::Control {
            return false;
        }
        let p = grid.coords(node);
        partition
            .components()
            .iter()
            .filter(|r| r.contains_strictly(p, grid.dim(), 0.0))
            .any(|r| r.inner_distance(p, grid.dim()) > self.half_depth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(1, 4.0, 257).unwrap()
    }

    #[test]
    fn control_mask_counts_nodes() {
        let g = grid();
        let p = RegionPartition::new(&g, &RegionSpec::intervals(&[(1.5, 2.5)])).unwrap();
        // strict membership drops the two endpoint nodes of the closed count 1/hx + 1
        assert_eq!(p.control().len(), 31);
        assert_eq!(p.control_runs(), 1);
        // |x| < 1 strictly: 63 nodes
        assert_eq!(p.interior().len(), 63);
    }

    #[test]
    fn overlapping_ball_is_rejected() {
        let g = grid();
        let e = RegionPartition::new(&g, &RegionSpec::intervals(&[(0.9, 2.0)]));
        assert!(matches!(e, Err(Error::InvalidRegion(_))));
        // closer than 2hx to the ball
        let e = RegionPartition::new(&g, &RegionSpec::intervals(&[(1.05, 2.0)]));
        assert!(e.is_err());
        // outside the box
        let e = RegionPartition::new(&g, &RegionSpec::intervals(&[(2.0, 4.5)]));
        assert!(e.is_err());
    }

    #[test]
    fn two_components() {
        let g = grid();
        let p =
            RegionPartition::new(&g, &RegionSpec::intervals(&[(-3.0, -2.0), (2.0, 3.0)])).unwrap();
        assert_eq!(p.control_runs(), 2);
        assert!(p.control().iter().all(|&k| g.coords(k)[0].abs() > 2.0));
    }

    #[test]
    fn empty_after_rounding() {
        let g = Grid::new(1, 4.0, 17).unwrap(); // hx = 0.5
        let e = RegionPartition::new(&g, &RegionSpec::intervals(&[(2.1, 2.4)]));
        assert!(e.is_err());
    }

    #[test]
    fn masks_cover_and_are_disjoint() {
        let g = Grid::new(2, 3.0, 33).unwrap();
        let spec = RegionSpec::new(vec![Region::rect([1.6, 2.6], [-0.5, 0.5])]);
        let p = RegionPartition::new(&g, &spec).unwrap();
        let mut seen = vec![0u8; g.node_count()];
        for &k in p.interior().iter().chain(p.control()).chain(p.zero()) {
            seen[k] += 1;
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn cutoff_is_one_at_centre() {
        let g = grid();
        let p = RegionPartition::new(&g, &RegionSpec::intervals(&[(1.5, 2.5)])).unwrap();
        let eta = Cutoff::new(&g, &p, CutoffProfile::Quintic).unwrap();
        let centre = 128 + 64; // x = 2.0
        assert_eq!(g.coords(centre)[0], 2.0);
        assert_eq!(eta.values()[centre], 1.0);
        for k in 0..g.node_count() {
            if p.kind(k) != NodeKind::Control {
                assert_eq!(eta.values()[k], 0.0);
            }
            if eta.in_half_region(&g, &p, k) {
                assert_eq!(eta.values()[k], 1.0);
            }
        }
    }

    #[test]
    fn cutoff_ramps_are_monotone() {
        let g = grid();
        let p = RegionPartition::new(&g, &RegionSpec::intervals(&[(1.5, 2.5)])).unwrap();
        let eta = Cutoff::new(&g, &p, CutoffProfile::Quintic).unwrap();
        let v: Vec<f64> = p.control().iter().map(|&k| eta.values()[k]).collect();
        let mid = v.len() / 2;
        assert!(v[..=mid].windows(2).all(|w| w[0] <= w[1]));
        assert!(v[mid..].windows(2).all(|w| w[0] >= w[1]));
        let max = v.iter().cloned().fold(0.0, f64::max);
        let min = eta.values().iter().cloned().fold(1.0, f64::min);
        assert_eq!(max, 1.0);
        assert_eq!(min, 0.0);
        // first ramp node: distance hx/(R/2) with R/2 = 0.25
        let first = smooth_ramp(0.03125 / 0.25);
        assert!((v[0] - first).abs() < 1e-15);
    }

    #[test]
    fn thin_component_is_rejected() {
        let g = grid();
        let p = RegionPartition::new(&g, &RegionSpec::intervals(&[(2.0, 2.05), (2.5, 3.5)])).unwrap();
        assert!(matches!(
            Cutoff::new(&g, &p, CutoffProfile::Quintic),
            Err(Error::UnresolvedCutoff(_))
        ));
    }

    #[test]
    fn ramp_is_c2_at_the_ends() {
        let h = 1e-4;
        let d2 = |t: f64| (smooth_ramp(t + h) - 2.0 * smooth_ramp(t) + smooth_ramp(t - h)) / (h * h);
        assert!(d2(h).abs() < 1e-2);
        assert!(d2(1.0 - h).abs() < 1e-2);
    }
}
