//! Seeded random fields for ensembles and property checks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix with i.i.d. entries uniform in `[-1, 1]`.
pub fn uniform_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Random smooth trajectory on a 1D mask: a few sine modes in space
/// (relative to `[lo, hi]`) times a few sine modes in time, vanishing at
/// `t = ±1`.
pub fn smooth_trajectory(
    rng: &mut SeededRng,
    coords: &[f64],
    lo: f64,
    hi: f64,
    times: &[f64],
    modes: usize,
) -> DMatrix<f64> {
    use std::f64::consts::PI;
    let mut out = DMatrix::zeros(coords.len(), times.len());
    for p in 1..=modes {
        for q in 1..=modes {
            let a: f64 = rng.gen_range(-1.0..1.0) / (p * q) as f64;
            for (i, &x) in coords.iter().enumerate() {
                let sx = (p as f64 * PI * (x - lo) / (hi - lo)).sin();
                for (k, &t) in times.iter().enumerate() {
                    out[(i, k)] += a * sx * (q as f64 * PI * (t + 1.0) / 2.0).sin();
                }
            }
        }
    }
    out
}
