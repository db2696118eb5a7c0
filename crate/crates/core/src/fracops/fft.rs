use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};
use crate::lattice::Grid;

/// Which periodic box the reference operator works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeriodicBox {
    /// The grid box itself with period `2L`; the last node repeats the first.
    Grid,
    /// Zero-padded box, sixteen times the grid width in 1D and eight times
    /// in 2D. The field must vanish on the box edge.
    Padded,
}

/// Spectral multiplier `|ξ|^{2s}` applied on a periodic box. Accepts
/// `s ∈ (0, 1]` so that `s = 1` reproduces `−Δ`.
pub fn fft_reference_apply(grid: &Grid, values: &[f64], s: f64, periodic: PeriodicBox) -> Result<Vec<f64>> {
    if !(s.is_finite() && s > 0.0 && s <= 1.0) {
        return Err(invalid("s", format!("order must lie in (0, 1], got {s}")));
    }
    if values.len() != grid.node_count() {
        return Err(Error::ShapeMismatch("field length does not match the grid".into()));
    }
    let n = grid.points_per_axis();
    let dim = grid.dim();
    let period = match periodic {
        PeriodicBox::Grid => n - 1,
        PeriodicBox::Padded => {
            let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let touches = (0..values.len()).any(|k| {
                let [i, j] = grid.multi_index(k);
                let edge = i == 0 || i == n - 1 || (dim == 2 && (j == 0 || j == n - 1));
                edge && values[k].abs() > 1e-12 * peak
            });
            if touches {
                return Err(Error::SupportTouchesBoundary);
            }
            let factor = if dim == 1 { 16 } else { 8 };
            (factor * (n - 1)).next_power_of_two()
        }
    };
    let p = period;
    let rows = if dim == 1 { 1 } else { p };
    let mut buf = vec![Complex64::new(0.0, 0.0); rows * p];
    for (k, v) in values.iter().enumerate() {
        let [i, j] = grid.multi_index(k);
        if i >= p || (dim == 2 && j >= p) {
            continue;
        }
        let idx = if dim == 1 { i } else { i * p + j };
        buf[idx] = Complex64::new(*v, 0.0);
    }

    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(p);
    let inv = planner.plan_fft_inverse(p);
    transform(&mut buf, p, rows, &*fwd);

    let dk = 2.0 * std::f64::consts::PI / (p as f64 * grid.spacing());
    let freq = |k: usize| if k <= p / 2 { k as f64 } else { k as f64 - p as f64 } * dk;
    for r in 0..rows {
        for c in 0..p {
            let xi2 = if dim == 1 {
                freq(c).powi(2)
            } else {
                freq(r).powi(2) + freq(c).powi(2)
            };
            let symbol = if xi2 == 0.0 { 0.0 } else { xi2.powf(s) };
            buf[r * p + c] *= symbol;
        }
    }

    transform(&mut buf, p, rows, &*inv);
    let norm = (rows * p) as f64;
    Ok((0..values.len())
        .map(|k| {
            let [i, j] = grid.multi_index(k);
            let (i, j) = (i % p, j % p);
            let idx = if dim == 1 { i } else { i * p + j };
            buf[idx].re / norm
        })
        .collect())
}

/// Row transforms, then column transforms when `rows > 1`.
fn transform(buf: &mut [Complex64], p: usize, rows: usize, fft: &dyn rustfft::Fft<f64>) {
    for row in buf.chunks_mut(p) {
        fft.process(row);
    }
    if rows > 1 {
        let mut col = vec![Complex64::new(0.0, 0.0); rows];
        for c in 0..p {
            for r in 0..rows {
                col[r] = buf[r * p + c];
            }
            fft.process(&mut col);
            for r in 0..rows {
                buf[r * p + c] = col[r];
            }
        }
    }
}
