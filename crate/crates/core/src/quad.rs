//! Gauss–Legendre rules.

use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// `order`-point rule on `[-1, 1]`, nodes by Newton iteration on `P_order`.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "rule needs at least one node");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let m = order.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(order, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        if order % 2 == 1 {
            nodes[order / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Tensor rule over `[x0, x1] × [y0, y1]` split into `split × split` panels.
    pub fn integrate_rect(&self, x: [f64; 2], y: [f64; 2], split: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
        let hx = (x[1] - x[0]) / split as f64;
        let hy = (y[1] - y[0]) / split as f64;
        let mut total = 0.0;
        for a in 0..split {
            let xa = x[0] + a as f64 * hx;
            for b in 0..split {
                let yb = y[0] + b as f64 * hy;
                total += self.integrate(xa, xa + hx, |u| self.integrate(yb, yb + hy, |v| f(u, v)));
            }
        }
        total
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for order in [1, 2, 5, 8, 16] {
            let g = GaussLegendre::new(order);
            let deg = 2 * order - 1;
            let exact = (3f64.powi(deg as i32 + 1) - 1.0) / (deg as f64 + 1.0);
            let v = g.integrate(1.0, 3.0, |x| x.powi(deg as i32));
            assert!((v - exact).abs() < 1e-12 * exact, "order {order}: {v} vs {exact}");
            let wsum = g.integrate(-1.0, 1.0, |_| 1.0);
            assert!((wsum - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn smooth_integrand() {
        let g = GaussLegendre::new(12);
        let v = g.integrate(0.0, PI, f64::sin);
        assert!((v - 2.0).abs() < 1e-13);
        let r = g.integrate_rect([0.0, 1.0], [0.0, 2.0], 2, |x, y| x * y.exp());
        assert!((r - 0.5 * (2f64.exp() - 1.0)).abs() < 1e-13);
    }
}
