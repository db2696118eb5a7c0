//! Dimensionless cell weights of the kernel `|ζ|^{-d-2s}` on the unit lattice.
//!
//! Everything here is measured in units of the grid spacing; the assembled
//! matrix multiplies by `c_{d,s} hx^{-2s}`.

use rayon::prelude::*;

use crate::quad::GaussLegendre;

/// Beyond this cell index the closed-form ramp integrals lose digits to
/// cancellation, so a Gauss rule is used instead.
const CLOSED_FORM_LIMIT: f64 = 64.0;
const ERROR_SUM_CELLS: usize = 4096;

/// Weights of the one-dimensional scheme: piecewise-linear interpolation on
/// cells `[j, j+1]`, `j ≥ 1`, plus a quadratic Taylor model on `[0, 1]`.
#[derive(Debug, Clone)]
pub(crate) struct Kernel1d {
    s: f64,
    near: f64,
    gl: GaussLegendre,
}

impl Kernel1d {
    pub fn new(s: f64) -> Self {
        let gl = GaussLegendre::new(8);
        let mut k = Self { s, near: 0.0, gl };
        let mut e = 0.0;
        for j in 1..ERROR_SUM_CELLS {
            let jf = j as f64;
            e += k.gl.integrate(jf, jf + 1.0, |z| 0.5 * (z - jf) * (jf + 1.0 - z) * z.powf(-1.0 - 2.0 * s));
        }
        e += (ERROR_SUM_CELLS as f64).powf(-2.0 * s) / (2.0 * s) / 12.0;
        let near = 1.0 / (2.0 - 2.0 * s) - 2.0 * e;
        // keep the nearest off-diagonal entry nonpositive for very small s
        k.near = near.max(-k.falling(1.0));
        k
    }

    /// `∫_a^b ζ^{-1-2s}`.
    fn i0(&self, a: f64, b: f64) -> f64 {
        let p = 2.0 * self.s;
        -a.powf(-p) * (-p * (b / a).ln()).exp_m1() / p
    }

    /// `∫_a^b ζ^{-2s}`.
    fn i1(&self, a: f64, b: f64) -> f64 {
        let p = 1.0 - 2.0 * self.s;
        let l = (b / a).ln();
        if p.abs() < 1e-12 {
            l
        } else {
            a.powf(p) * (p * l).exp_m1() / p
        }
    }

    /// `∫_a^{a+1} (ζ - a) ζ^{-1-2s}`.
    pub fn rising(&self, a: f64) -> f64 {
        if a < CLOSED_FORM_LIMIT {
            self.i1(a, a + 1.0) - a * self.i0(a, a + 1.0)
        } else {
            self.gl.integrate(a, a + 1.0, |z| (z - a) * z.powf(-1.0 - 2.0 * self.s))
        }
    }

    /// `∫_a^{a+1} (a + 1 - ζ) ζ^{-1-2s}`.
    pub fn falling(&self, a: f64) -> f64 {
        if a < CLOSED_FORM_LIMIT {
            (a + 1.0) * self.i0(a, a + 1.0) - self.i1(a, a + 1.0)
        } else {
            self.gl.integrate(a, a + 1.0, |z| (a + 1.0 - z) * z.powf(-1.0 - 2.0 * self.s))
        }
    }

    /// Weight coupling a node to the node `j ≥ 1` cells away.
    pub fn offset(&self, j: usize) -> f64 {
        let jf = j as f64;
        let mut w = self.falling(jf);
        if j >= 2 {
            w += self.rising(jf - 1.0);
        }
        if j == 1 {
            w += self.near;
        }
        w
    }

    /// Diagonal weight; independent of the node.
    pub fn diagonal(&self) -> f64 {
        1.0 / self.s + 2.0 * self.near
    }

    /// Exterior contribution on one side when `j` lattice nodes follow.
    fn side_tail(&self, j: usize) -> f64 {
        if j == 0 {
            1.0 / (2.0 * self.s) + self.near
        } else {
            let jf = j as f64;
            (jf + 1.0).powf(-2.0 * self.s) / (2.0 * self.s) + self.rising(jf)
        }
    }

    /// Tail coefficient of node `i` on a lattice of `n` nodes.
    pub fn tail(&self, i: usize, n: usize) -> f64 {
        self.side_tail(i) + self.side_tail(n - 1 - i)
    }

    pub fn table(&self, n: usize) -> Vec<f64> {
        let mut t: Vec<f64> = (0..n).into_par_iter().map(|j| if j == 0 { 0.0 } else { -self.offset(j).max(0.0) }).collect();
        t[0] = self.diagonal();
        t
    }
}

/// Weights of the two-dimensional scheme: bilinear interpolation on lattice
/// cells outside `[-1, 1]²` and a quadratic Taylor model inside it.
#[derive(Debug, Clone)]
pub(crate) struct Kernel2d {
    s: f64,
    gl: GaussLegendre,
    near: f64,
}

const ERROR_SUM_RADIUS: i64 = 128;

impl Kernel2d {
    pub fn new(s: f64) -> Self {
        let gl = GaussLegendre::new(8);
        let mut k = Self { s, gl, near: 0.0 };
        let g16 = GaussLegendre::new(16);
        let p = 2.0 - 2.0 * s;
        // ∫_{[-1,1]²} |ζ|^{-2s}
        let core = 8.0 / p * g16.integrate(0.0, std::f64::consts::FRAC_PI_4, |t| t.cos().powf(-p));
        // interpolation error of the bilinear model, one quadrant at a time
        let e = -1.0 - s;
        let quadrant: f64 = (0..ERROR_SUM_RADIUS * ERROR_SUM_RADIUS)
            .into_par_iter()
            .filter(|&c| c != 0)
            .map(|c| {
                let (a, b) = (c / ERROR_SUM_RADIUS, c % ERROR_SUM_RADIUS);
                k.on_cell(a, b, |x, y| {
                    let fx = x - a as f64;
                    0.5 * fx * (1.0 - fx) * (x * x + y * y).powf(e)
                })
            })
            .sum();
        let err = 4.0 * quadrant + k.outside_rect([ERROR_SUM_RADIUS as f64; 4]) / 12.0;
        let near = 0.25 * core - err;
        k.near = near.max(-k.hat(1, 0));
        k
    }

    fn on_cell(&self, a: i64, b: i64, f: impl Fn(f64, f64) -> f64) -> f64 {
        let split = match a.abs().max(b.abs()) {
            0..=2 => 4,
            3..=6 => 2,
            _ => 1,
        };
        let (af, bf) = (a as f64, b as f64);
        self.gl.integrate_rect([af, af + 1.0], [bf, bf + 1.0], split, f)
    }

    /// `∫ hat_{(p,q)} |ζ|^{-2-2s}` over the lattice cells around node
    /// `(p, q) ≠ 0` that lie outside `[-1, 1]²`.
    pub fn hat(&self, p: usize, q: usize) -> f64 {
        let (p, q) = (p as i64, q as i64);
        let e = -1.0 - self.s;
        let mut total = 0.0;
        for a in [p - 1, p] {
            for b in [q - 1, q] {
                if (-1..=0).contains(&a) && (-1..=0).contains(&b) {
                    continue;
                }
                total += self.on_cell(a, b, |x, y| {
                    let w = (1.0 - (x - p as f64).abs()) * (1.0 - (y - q as f64).abs());
                    w * (x * x + y * y).powf(e)
                });
            }
        }
        total
    }

    /// `∫ |ζ|^{-2-2s}` outside the axis-aligned rectangle whose sides lie at
    /// distances `[left, right, below, above]` from the origin.
    pub fn outside_rect(&self, d: [f64; 4]) -> f64 {
        let [l, r, b, a] = d;
        let sides = [(r, b, a), (l, b, a), (a, l, r), (b, l, r)];
        let total: f64 = sides
            .iter()
            .map(|&(dist, e1, e2)| self.side_angle(dist, e1) + self.side_angle(dist, e2))
            .sum();
        total / (2.0 * self.s)
    }

    /// `∫ ρ^{-2s} dθ` over the part of one side from its foot point to a
    /// corner at offset `extent`, written as a line integral along the side.
    fn side_angle(&self, dist: f64, extent: f64) -> f64 {
        let f = |x: f64| dist * (dist * dist + x * x).powf(-1.0 - self.s);
        let mut total = 0.0;
        let mut lo = 0.0;
        let mut hi = dist.min(extent);
        while lo < extent {
            total += self.gl.integrate(lo, hi, f);
            lo = hi;
            hi = (2.0 * hi).min(extent);
        }
        total
    }

    pub fn diagonal(&self) -> f64 {
        self.outside_rect([1.0; 4]) + 4.0 * self.near
    }

    /// Offset table indexed by `p * n + q`, entry 0 holding the diagonal.
    pub fn table(&self, n: usize) -> Vec<f64> {
        let mut t: Vec<f64> = (0..n * n)
            .into_par_iter()
            .map(|k| {
                let (p, q) = (k / n, k % n);
                if k == 0 {
                    0.0
                } else {
                    -(self.hat(p, q) + if p + q == 1 { self.near } else { 0.0 }).max(0.0)
                }
            })
            .collect();
        t[0] = self.diagonal();
        t
    }
}

/// Row sums of the 2D operator from its offset table, by folded prefix sums.
pub(crate) fn row_sums_2d(table: &[f64], n: usize) -> Vec<f64> {
    let mut pre = vec![0.0; n * n];
    for p in 0..n {
        let mut run = 0.0;
        for q in 0..n {
            run += table[p * n + q];
            pre[p * n + q] = run + if p > 0 { pre[(p - 1) * n + q] } else { 0.0 };
        }
    }
    let s = |p: usize, q: usize| pre[p * n + q];
    (0..n * n)
        .map(|node| {
            let (i, j) = (node / n, node % n);
            let (a, b, c, d) = (i, n - 1 - i, j, n - 1 - j);
            let col = |q: usize| s(a, q) + s(b, q) - s(0, q);
            col(c) + col(d) - col(0)
        })
        .collect()
}
