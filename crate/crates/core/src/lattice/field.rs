use std::io::{BufRead, Write};
use std::ops::RangeInclusive;

use nalgebra::DMatrix;

use super::grid::{Grid, GridShape, TimeGrid};
use crate::error::{Error, Result};

/// Lattice values over a uniform time grid, stored level by level.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    shape: GridShape,
    time: TimeGrid,
    data: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: &Grid, time: TimeGrid) -> Self {
        Self {
            shape: grid.shape(),
            time,
            data: vec![0.0; grid.node_count() * time.levels()],
        }
    }

    pub fn from_data(grid: &Grid, time: TimeGrid, data: Vec<f64>) -> Result<Self> {
        let expected = grid.node_count() * time.levels();
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "field has {} values, grid and time grid need {expected}",
                data.len()
            )));
        }
        Ok(Self {
            shape: grid.shape(),
            time,
            data,
        })
    }

    /// Samples `f(x, t)` on every node and level.
    pub fn from_fn(grid: &Grid, time: TimeGrid, f: impl Fn([f64; 2], f64) -> f64) -> Self {
        let mut out = Self::zeros(grid, time);
        for k in 0..time.levels() {
            let t = time.time(k);
            for (node, v) in out.level_mut(k).iter_mut().enumerate() {
                *v = f(grid.coords(node), t);
            }
        }
        out
    }

    /// Same profile at every level.
    pub fn constant_in_time(grid: &Grid, time: TimeGrid, values: &[f64]) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::ShapeMismatch("spatial profile length".into()));
        }
        let mut data = Vec::with_capacity(values.len() * time.levels());
        for _ in 0..time.levels() {
            data.extend_from_slice(values);
        }
        Self::from_data(grid, time, data)
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn time_grid(&self) -> TimeGrid {
        self.time
    }

    pub fn nodes(&self) -> usize {
        self.shape.node_count()
    }

    pub fn levels(&self) -> usize {
        self.time.levels()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn level(&self, k: usize) -> &[f64] {
        let n = self.nodes();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.nodes();
        &mut self.data[k * n..(k + 1) * n]
    }

    pub fn get(&self, level: usize, node: usize) -> f64 {
        self.data[level * self.nodes() + node]
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.shape != grid.shape() {
            return Err(Error::ShapeMismatch(format!(
                "field lives on {:?}, operator on {:?}",
                self.shape,
                grid.shape()
            )));
        }
        Ok(())
    }

    pub fn check_compatible(&self, other: &SpaceTimeField) -> Result<()> {
        if self.shape != other.shape || self.time != other.time {
            return Err(Error::ShapeMismatch("fields on different grids".into()));
        }
        Ok(())
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= a);
        out
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &SpaceTimeField, b: f64) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (o, w) in out.data.iter_mut().zip(&other.data) {
            *o = a * *o + b * w;
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Values on `mask` as a `(mask.len() × levels)` matrix.
    pub fn gather(&self, mask: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(mask.len(), self.levels(), |i, k| self.get(k, mask[i]))
    }

    /// Field that is `values` on `mask` and zero elsewhere.
    pub fn scatter(grid: &Grid, time: TimeGrid, mask: &[usize], values: &DMatrix<f64>) -> Result<Self> {
        if values.nrows() != mask.len() || values.ncols() != time.levels() {
            return Err(Error::ShapeMismatch(format!(
                "masked values are {}x{}, expected {}x{}",
                values.nrows(),
                values.ncols(),
                mask.len(),
                time.levels()
            )));
        }
        let mut out = Self::zeros(grid, time);
        out.set_on(mask, values);
        Ok(out)
    }

    pub(crate) fn set_on(&mut self, mask: &[usize], values: &DMatrix<f64>) {
        let n = self.nodes();
        for k in 0..values.ncols() {
            for (i, &node) in mask.iter().enumerate() {
                self.data[k * n + node] = values[(i, k)];
            }
        }
    }

    /// Writes the field as CSV: a header `t,<coords...>` then one row per level.
    /// 2D coordinates are written as `x:y`.
    pub fn write_csv<W: Write>(&self, grid: &Grid, mut out: W) -> Result<()> {
        self.check_grid(grid)?;
        let mut header = String::from("t");
        for node in 0..grid.node_count() {
            let [x, y] = grid.coords(node);
            header.push(',');
            if grid.dim() == 1 {
                header.push_str(&fmt_num(x));
            } else {
                header.push_str(&format!("{}:{}", fmt_num(x), fmt_num(y)));
            }
        }
        writeln!(out, "{header}")?;
        for k in 0..self.levels() {
            let mut row = fmt_num(self.time.time(k));
            for v in self.level(k) {
                row.push(',');
                row.push_str(&fmt_num(*v));
            }
            writeln!(out, "{row}")?;
        }
        Ok(())
    }

    /// Reads a field written by [`SpaceTimeField::write_csv`] for the given grid.
    pub fn read_csv<R: BufRead>(grid: &Grid, input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty CSV".into()))??;
        let cols = header.split(',').count();
        if cols != grid.node_count() + 1 {
            return Err(Error::Format(format!(
                "CSV has {} node columns, grid has {}",
                cols - 1,
                grid.node_count()
            )));
        }
        let mut data = Vec::new();
        let mut levels = 0;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split(',');
            it.next();
            for tok in it {
                data.push(
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Format(format!("bad number `{tok}`: {e}")))?,
                );
            }
            levels += 1;
        }
        if levels < 3 {
            return Err(Error::Format("CSV needs at least three time levels".into()));
        }
        let time = TimeGrid::new(levels - 1)?;
        Self::from_data(grid, time, data)
    }
}

/// Fixed 17-significant-digit formatting used by every CSV artifact.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Weighted inner product on (mask × levels) matrices: `hx^d Σ_t w_t Σ_x a b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeInner {
    pub cell_volume: f64,
    pub weights: Vec<f64>,
}

impl SpaceTimeInner {
    pub fn new(grid: &Grid, time: TimeGrid) -> Self {
        Self {
            cell_volume: grid.cell_volume(),
            weights: time.trapezoid_weights(),
        }
    }

    pub fn dot(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        debug_assert_eq!(a.shape(), b.shape());
        let mut s = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            s += w * a.column(k).dot(&b.column(k));
        }
        s * self.cell_volume
    }

    pub fn norm(&self, a: &DMatrix<f64>) -> f64 {
        self.dot(a, a).max(0.0).sqrt()
    }
}

fn check_mask(grid: &Grid, field: &SpaceTimeField, mask: &[usize]) -> Result<()> {
    field.check_grid(grid)?;
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    if mask.iter().any(|&k| k >= grid.node_count()) {
        return Err(Error::ShapeMismatch("mask index outside the grid".into()));
    }
    Ok(())
}

fn range_weights(field: &SpaceTimeField, range: &RangeInclusive<usize>) -> Result<Vec<f64>> {
    field.time_grid().trapezoid_weights_on(*range.start(), *range.end())
}

/// `√(Σ_t w_t Σ_{x∈mask} hx^d |u|²)` with trapezoid weights on `range`.
pub fn norm_l2(
    grid: &Grid,
    field: &SpaceTimeField,
    mask: &[usize],
    range: RangeInclusive<usize>,
) -> Result<f64> {
    check_mask(grid, field, mask)?;
    let w = range_weights(field, &range)?;
    Ok(weighted_sq(grid, field.data(), field.nodes(), mask, &w).sqrt())
}

fn weighted_sq(grid: &Grid, data: &[f64], nodes: usize, mask: &[usize], w: &[f64]) -> f64 {
    let mut s = 0.0;
    for (k, wk) in w.iter().enumerate() {
        if *wk == 0.0 {
            continue;
        }
        let level = &data[k * nodes..(k + 1) * nodes];
        s += wk * mask.iter().map(|&i| level[i] * level[i]).sum::<f64>();
    }
    s * grid.cell_volume()
}

/// First-difference operators restricted to a mask and a level range.
struct Differences<'a> {
    grid: &'a Grid,
    nodes: usize,
    in_mask: Vec<bool>,
    first: usize,
    last: usize,
    dt: f64,
}

impl<'a> Differences<'a> {
    fn new(grid: &'a Grid, field: &SpaceTimeField, mask: &[usize], range: &RangeInclusive<usize>) -> Self {
        let mut in_mask = vec![false; grid.node_count()];
        for &k in mask {
            in_mask[k] = true;
        }
        Self {
            grid,
            nodes: field.nodes(),
            in_mask,
            first: *range.start(),
            last: *range.end(),
            dt: field.time_grid().dt(),
        }
    }

    fn neighbour(&self, node: usize, axis: usize, step: isize) -> Option<usize> {
        let mut idx = self.grid.multi_index(node);
        let j = idx[axis] as isize + step;
        if j < 0 || j >= self.grid.points_per_axis() as isize {
            return None;
        }
        idx[axis] = j as usize;
        let k = self.grid.flat_index(idx);
        self.in_mask[k].then_some(k)
    }

    /// Spatial difference along `axis`: centred inside the mask, one-sided at its edges.
    fn space(&self, data: &[f64], axis: usize) -> Vec<f64> {
        let h = self.grid.spacing();
        let mut out = vec![0.0; data.len()];
        for k in self.first..=self.last {
            let base = k * self.nodes;
            for node in 0..self.nodes {
                if !self.in_mask[node] {
                    continue;
                }
                let l = self.neighbour(node, axis, -1);
                let r = self.neighbour(node, axis, 1);
                out[base + node] = match (l, r) {
                    (Some(l), Some(r)) => (data[base + r] - data[base + l]) / (2.0 * h),
                    (None, Some(r)) => (data[base + r] - data[base + node]) / h,
                    (Some(l), None) => (data[base + node] - data[base + l]) / h,
                    (None, None) => 0.0,
                };
            }
        }
        out
    }

    /// Time difference: centred inside the range, first order at its ends.
    fn time(&self, data: &[f64]) -> Vec<f64> {
        let n = self.nodes;
        let mut out = vec![0.0; data.len()];
        for k in self.first..=self.last {
            let (a, b, scale) = if k == self.first {
                (k, k + 1, self.dt)
            } else if k == self.last {
                (k - 1, k, self.dt)
            } else {
                (k - 1, k + 1, 2.0 * self.dt)
            };
            for node in 0..n {
                if self.in_mask[node] {
                    out[k * n + node] = (data[b * n + node] - data[a * n + node]) / scale;
                }
            }
        }
        out
    }
}

/// Space-time `H¹` norm: `L²` part plus spatial and temporal first differences.
pub fn norm_h1(
    grid: &Grid,
    field: &SpaceTimeField,
    mask: &[usize],
    range: RangeInclusive<usize>,
) -> Result<f64> {
    check_mask(grid, field, mask)?;
    let w = range_weights(field, &range)?;
    let d = Differences::new(grid, field, mask, &range);
    let n = field.nodes();
    let mut total = weighted_sq(grid, field.data(), n, mask, &w);
    for axis in 0..grid.dim() {
        total += weighted_sq(grid, &d.space(field.data(), axis), n, mask, &w);
    }
    total += weighted_sq(grid, &d.time(field.data()), n, mask, &w);
    Ok(total.sqrt())
}

/// Space-time `H²` norm: the `H¹` terms plus all composed second differences.
pub fn norm_h2(
    grid: &Grid,
    field: &SpaceTimeField,
    mask: &[usize],
    range: RangeInclusive<usize>,
) -> Result<f64> {
    check_mask(grid, field, mask)?;
    let w = range_weights(field, &range)?;
    let d = Differences::new(grid, field, mask, &range);
    let n = field.nodes();
    let mut firsts: Vec<Vec<f64>> = (0..grid.dim()).map(|a| d.space(field.data(), a)).collect();
    firsts.push(d.time(field.data()));
    let mut total = weighted_sq(grid, field.data(), n, mask, &w);
    for (i, fi) in firsts.iter().enumerate() {
        total += weighted_sq(grid, fi, n, mask, &w);
        // second differences: each unordered pair of directions once
        for j in i..firsts.len() {
            let second = if j == grid.dim() { d.time(fi) } else { d.space(fi, j) };
            let mult = if i == j { 1.0 } else { 2.0 };
            total += mult * weighted_sq(grid, &second, n, mask, &w);
        }
    }
    Ok(total.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::region::{RegionPartition, RegionSpec};
    use std::f64::consts::PI;

    fn setup(n: usize, m: usize) -> (Grid, TimeGrid, RegionPartition) {
        let g = Grid::new(1, 4.0, n).unwrap();
        let t = TimeGrid::new(m).unwrap();
        let p = RegionPartition::new(&g, &RegionSpec::intervals(&[(1.5, 2.5)])).unwrap();
        (g, t, p)
    }

    #[test]
    fn zero_field_has_zero_norms() {
        let (g, t, p) = setup(129, 16);
        let z = SpaceTimeField::zeros(&g, t);
        assert_eq!(norm_l2(&g, &z, p.interior(), 0..=16).unwrap(), 0.0);
        assert_eq!(norm_h1(&g, &z, p.interior(), 0..=16).unwrap(), 0.0);
        assert_eq!(norm_h2(&g, &z, p.interior(), 0..=16).unwrap(), 0.0);
    }

    #[test]
    fn unit_field_measures_the_cylinder() {
        let (g, t, p) = setup(257, 64);
        let one = SpaceTimeField::from_fn(&g, t, |_, _| 1.0);
        let v = norm_l2(&g, &one, p.interior(), 0..=64).unwrap();
        // 63 nodes of width hx cover 2 - hx
        assert!((v - 2.0).abs() < g.spacing(), "{v}");
    }

    #[test]
    fn sine_profile_norm() {
        let (g, t, p) = setup(257, 8);
        let f = SpaceTimeField::from_fn(&g, t, |x, _| (PI * x[0]).sin());
        let v = norm_l2(&g, &f, p.interior(), 0..=8).unwrap();
        // ∫∫ sin²(πx) dx dt = 1·2
        assert!((v - 2f64.sqrt()).abs() < 2.0 * g.spacing().powi(2), "{v}");
    }

    #[test]
    fn linear_in_time_h1() {
        let (g, t, p) = setup(257, 64);
        let f = SpaceTimeField::from_fn(&g, t, |_, t| t);
        let v = norm_h1(&g, &f, p.interior(), 0..=64).unwrap();
        // ∫∫ t² = 4/3 and ∫∫ |∂_t t|² = 4 over B × (-1, 1)
        let exact = (4.0 / 3.0 + 4.0f64).sqrt();
        assert!((v - exact).abs() < 2.0 * g.spacing() + t.dt(), "{v} vs {exact}");
    }

    #[test]
    fn h1_refinement_is_self_consistent() {
        let bump = |x: [f64; 2], t: f64| {
            if x[0].abs() < 1.0 {
                (PI * x[0] / 2.0).cos().powi(2) * (PI * t / 2.0).cos().powi(2)
            } else {
                0.0
            }
        };
        let eval = |n: usize| {
            let (g, _, p) = setup(n, 8);
            let t = TimeGrid::new(n - 1).unwrap();
            let f = SpaceTimeField::from_fn(&g, t, bump);
            norm_h1(&g, &f, p.interior(), 0..=(n - 1)).unwrap()
        };
        let a = eval(129);
        let b = eval(257);
        // same value to three significant digits
        assert_eq!(format!("{a:.2e}"), format!("{b:.2e}"), "{a} {b}");
    }

    #[test]
    fn empty_mask_is_an_error() {
        let (g, t, _) = setup(129, 16);
        let z = SpaceTimeField::zeros(&g, t);
        assert!(matches!(norm_l2(&g, &z, &[], 0..=16), Err(Error::EmptyMask)));
    }

    #[test]
    fn csv_round_trip() {
        let (g, t, _) = setup(33, 4);
        let f = SpaceTimeField::from_fn(&g, t, |x, t| x[0].sin() * t + 1e-300);
        let mut buf = Vec::new();
        f.write_csv(&g, &mut buf).unwrap();
        let back = SpaceTimeField::read_csv(&g, buf.as_slice()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn gather_scatter_round_trip() {
        let (g, t, p) = setup(65, 4);
        let f = SpaceTimeField::from_fn(&g, t, |x, t| x[0] + t);
        let m = f.gather(p.interior());
        let back = SpaceTimeField::scatter(&g, t, p.interior(), &m).unwrap();
        for k in 0..t.levels() {
            for &i in p.interior() {
                assert_eq!(back.get(k, i), f.get(k, i));
            }
            for &i in p.control() {
                assert_eq!(back.get(k, i), 0.0);
            }
        }
    }
}
