use super::*;
use crate::lattice::{RegionPartition, RegionSpec, TimeGrid};
use crate::quad::GaussLegendre;

fn gaussian(grid: &Grid) -> Vec<f64> {
    grid.sample(|x| (-(x[0] * x[0] + x[1] * x[1])).exp())
}

/// `(−Δ)^s e^{−|x|²}` in 1D through Kummer's transformation of `₁F₁`.
fn gaussian_exact(s: f64, x: f64) -> f64 {
    let (a, b, z) = (0.5 + s, 0.5, x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..200 {
        let kf = k as f64;
        term *= (b - a + kf) * z / ((b + kf) * (kf + 1.0));
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    4f64.powf(s) * gamma(0.5 + s) / gamma(0.5) * (-z).exp() * sum
}

fn rel_l2_on(grid: &Grid, a: &[f64], b: &[f64], radius: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..a.len() {
        if grid.norm_of(k) <= radius {
            num += (a[k] - b[k]).powi(2);
            den += b[k].powi(2);
        }
    }
    (num / den).sqrt()
}

#[test]
fn normalization_known_values() {
    assert!((normalization(1, 0.5) - 1.0 / std::f64::consts::PI).abs() < 1e-15);
    // d = 2, s = ½: Γ(3/2)·2 / (π Γ(½)) · ½ = 1/(2π)
    assert!((normalization(2, 0.5) - 0.5 / std::f64::consts::PI).abs() < 1e-15);
}

#[test]
fn rejects_order_outside_unit_interval() {
    let g = Grid::new(1, 2.0, 33).unwrap();
    for s in [0.0, 1.0, -0.2, f64::NAN] {
        assert!(matches!(assemble(&g, s), Err(Error::InvalidParameter { .. })));
    }
}

#[test]
fn zero_field_maps_to_zero() {
    let g = Grid::new(1, 2.0, 65).unwrap();
    let op = assemble(&g, 0.4).unwrap();
    let t = TimeGrid::new(4).unwrap();
    let out = apply(&op, &SpaceTimeField::zeros(&g, t)).unwrap();
    assert_eq!(out.max_abs(), 0.0);
}

#[test]
fn matrix_sign_pattern_and_symmetry() {
    for (dim, n) in [(1, 65), (2, 21)] {
        let g = Grid::new(dim, 2.0, n).unwrap();
        for s in [0.05, 0.3, 0.5, 0.9] {
            let a = assemble(&g, s).unwrap().matrix().unwrap();
            assert_eq!(a, a.transpose());
            for i in 0..a.nrows() {
                assert!(a[(i, i)] > 0.0);
                for j in 0..a.ncols() {
                    if i != j {
                        assert!(a[(i, j)] <= 0.0, "s={s} ({i},{j}) = {}", a[(i, j)]);
                    }
                }
            }
        }
    }
}

#[test]
fn rows_sum_to_tail() {
    for (dim, n) in [(1, 65), (2, 17)] {
        let g = Grid::new(dim, 2.0, n).unwrap();
        let op = assemble(&g, 0.35).unwrap();
        let a = op.matrix().unwrap();
        for i in 0..a.nrows() {
            let row: f64 = a.row(i).sum();
            assert!(op.tail()[i] > 0.0);
            assert!((row - op.tail()[i]).abs() < 1e-7 * a[(i, i)], "row {i}: {row} vs {}", op.tail()[i]);
        }
    }
}

#[test]
fn interior_block_is_positive_definite() {
    let g = Grid::new(1, 4.0, 129).unwrap();
    let p = RegionPartition::interior_only(&g).unwrap();
    for s in [0.1, 0.5, 0.9] {
        let op = assemble(&g, s).unwrap();
        let b = op.block(p.interior(), p.interior());
        assert!(b.cholesky().is_some());
    }
}

#[test]
fn linearity() {
    let g = Grid::new(1, 3.0, 97).unwrap();
    let op = assemble(&g, 0.6).unwrap();
    let u = gaussian(&g);
    let w = g.sample(|x| (x[0] / 3.0 * std::f64::consts::PI).sin());
    let combo: Vec<f64> = u.iter().zip(&w).map(|(a, b)| 2.5 * a - 0.75 * b).collect();
    let au = op.apply_vec(&u).unwrap();
    let aw = op.apply_vec(&w).unwrap();
    let ac = op.apply_vec(&combo).unwrap();
    let scale = ac.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for k in 0..ac.len() {
        assert!((ac[k] - (2.5 * au[k] - 0.75 * aw[k])).abs() < 1e-13 * scale);
    }
}

#[test]
fn fft_reference_matches_closed_form() {
    let g = Grid::new(1, 8.0, 513).unwrap();
    let u = gaussian(&g);
    for s in [0.25, 0.5, 0.75] {
        let f = fft_reference_apply(&g, &u, s, PeriodicBox::Padded).unwrap();
        let exact: Vec<f64> = g.axis().iter().map(|&x| gaussian_exact(s, x)).collect();
        let err = rel_l2_on(&g, &f, &exact, 2.0);
        assert!(err < 2e-3, "s={s}: {err}");
    }
}

#[test]
fn assembled_operator_matches_fft_reference() {
    let g = Grid::new(1, 8.0, 513).unwrap();
    let u = gaussian(&g);
    for s in [0.25, 0.5, 0.75] {
        let op = assemble(&g, s).unwrap();
        let au = op.apply_vec(&u).unwrap();
        let f = fft_reference_apply(&g, &u, s, PeriodicBox::Padded).unwrap();
        let err = rel_l2_on(&g, &au, &f, 2.0);
        assert!(err <= 0.02, "s={s}: {err}");
    }
}

#[test]
fn complementary_orders_compose_to_laplacian() {
    let g = Grid::new(1, 8.0, 513).unwrap();
    let u = gaussian(&g);
    let s = 0.3;
    let once = fft_reference_apply(&g, &u, s, PeriodicBox::Grid).unwrap();
    let twice = fft_reference_apply(&g, &once, 1.0 - s, PeriodicBox::Grid).unwrap();
    let lap: Vec<f64> = g.axis().iter().map(|&x| (2.0 - 4.0 * x * x) * (-x * x).exp()).collect();
    assert!(rel_l2_on(&g, &twice, &lap, 3.0) < 0.01);
}

#[test]
fn fft_reference_trivial_cases() {
    let g = Grid::new(1, 2.0, 33).unwrap();
    let zero = fft_reference_apply(&g, &vec![0.0; 33], 0.5, PeriodicBox::Padded).unwrap();
    assert!(zero.iter().all(|v| *v == 0.0));
    let ones = fft_reference_apply(&g, &vec![1.0; 33], 0.5, PeriodicBox::Grid).unwrap();
    assert!(ones.iter().all(|v| v.abs() < 1e-14));
    assert!(matches!(
        fft_reference_apply(&g, &vec![1.0; 33], 0.5, PeriodicBox::Padded),
        Err(Error::SupportTouchesBoundary)
    ));
}

#[test]
fn two_dimensional_operator_tracks_fft_reference() {
    let g = Grid::new(2, 6.0, 97).unwrap();
    let u = gaussian(&g);
    for s in [0.25, 0.5, 0.75] {
        let op = assemble(&g, s).unwrap();
        let au = op.apply_vec(&u).unwrap();
        let f = fft_reference_apply(&g, &u, s, PeriodicBox::Padded).unwrap();
        let err = rel_l2_on(&g, &au, &f, 1.5);
        assert!(err < 0.02, "s={s}: {err}");
    }
}

#[test]
fn refinement_converges_at_least_linearly() {
    let u = |x: [f64; 2]| (-x[0] * x[0]).exp();
    let at_unit_nodes = |n: usize| -> Vec<f64> {
        let g = Grid::new(1, 4.0, n).unwrap();
        let au = assemble(&g, 0.5).unwrap().apply_vec(&g.sample(u)).unwrap();
        // values on the coarsest lattice inside B
        let stride = (n - 1) / 128;
        (0..129).map(|k| au[k * stride]).filter(|_| true).collect()
    };
    let coarse_grid = Grid::new(1, 4.0, 129).unwrap();
    let inside: Vec<usize> = (0..129).filter(|&k| coarse_grid.axis()[k].abs() < 1.0).collect();
    let a = at_unit_nodes(129);
    let b = at_unit_nodes(257);
    let c = at_unit_nodes(513);
    let diff = |x: &[f64], y: &[f64]| inside.iter().map(|&k| (x[k] - y[k]).powi(2)).sum::<f64>().sqrt();
    let order = (diff(&a, &b) / diff(&b, &c)).log2();
    assert!(order >= 1.0, "observed order {order}");
}

#[test]
fn exterior_values_match_convolution_integral() {
    // for u supported in B, (A u)(x) at x outside the support equals
    // −c ∫ u(y)|x−y|^{−1−2s} dy
    let g = Grid::new(1, 3.0, 193).unwrap();
    let s = 0.5;
    let p = RegionPartition::new(&g, &RegionSpec::intervals(&[(1.4, 2.6)])).unwrap();
    let bump = |x: f64| if x.abs() < 1.0 { (std::f64::consts::FRAC_PI_2 * x).cos().powi(2) } else { 0.0 };
    let u = g.sample(|x| bump(x[0]));
    let op = assemble(&g, s).unwrap();
    let au = op.apply_vec(&u).unwrap();
    let gl = GaussLegendre::new(40);
    let c = normalization(1, s);
    let mut exact = Vec::new();
    for &k in p.control() {
        let x = g.axis()[k];
        let v = -c * gl.integrate(-1.0, 1.0, |y| bump(y) * (x - y).abs().powf(-1.0 - 2.0 * s));
        assert!(au[k] < 0.0);
        assert!((au[k] - v).abs() < 1e-3 * v.abs(), "x={x}: {} vs {v}", au[k]);
        exact.push(au[k]);
    }
    // smooth across W: second differences stay at the scale of the field
    let h = g.spacing();
    let norm_u = (u.iter().map(|v| v * v).sum::<f64>() * h).sqrt();
    for w in exact.windows(3) {
        let d2 = (w[0] - 2.0 * w[1] + w[2]) / (h * h);
        assert!(d2.abs() < 10.0 * norm_u, "{d2}");
    }
}

#[test]
fn spectrum_invariants() {
    let g = Grid::new(1, 4.0, 257).unwrap();
    let p = RegionPartition::interior_only(&g).unwrap();
    let op = assemble(&g, 0.5).unwrap();
    let sp = dirichlet_spectrum(&op, &p, 6).unwrap();
    let v = sp.values();
    assert!(v[0] > 0.0 && v[0] < v[1]);
    assert!(v.windows(2).all(|w| w[0] <= w[1]));
    let phi = sp.vectors();
    assert!(phi.column(0).iter().all(|x| *x > 0.0));
    let gram = phi.transpose() * phi * sp.cell_volume();
    assert!((gram - DMatrix::identity(6, 6)).amax() < 1e-12);
    let a = op.block(p.interior(), p.interior());
    for k in 0..6 {
        let col = phi.column(k);
        let r = (&a * col - col * v[k]).norm() / col.norm();
        assert!(r <= 1e-10 * v[k]);
    }
    assert!(dirichlet_spectrum(&op, &p, p.interior().len() + 1).is_err());
}

#[test]
fn ground_state_against_reference_value() {
    // λ₁ of the half Laplacian on (−1, 1) is 1.1577738836977...
    let lam = |n| {
        let g = Grid::new(1, 4.0, n).unwrap();
        let p = RegionPartition::interior_only(&g).unwrap();
        dirichlet_spectrum(&assemble(&g, 0.5).unwrap(), &p, 1).unwrap().values()[0]
    };
    let (a, b) = (lam(257), lam(513));
    let r = richardson(a, b, 2.0, 1.0);
    assert!((r - 1.1577738836977).abs() < 5e-4, "{a} {b} {r}");
}

#[test]
fn spectrum_insensitive_to_box_size() {
    let lam = |l: f64, n: usize| {
        let g = Grid::new(1, l, n).unwrap();
        let p = RegionPartition::interior_only(&g).unwrap();
        dirichlet_spectrum(&assemble(&g, 0.3).unwrap(), &p, 3).unwrap().values().to_vec()
    };
    let a = lam(4.0, 129);
    let b = lam(6.0, 193);
    for k in 0..3 {
        assert!(((a[k] - b[k]) / a[k]).abs() <= 0.005);
    }
}

#[test]
fn dump_and_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::new(1, 2.0, 33).unwrap();
    let op = assemble(&g, 0.45).unwrap();
    for (name, fmt) in [("a.bin", MatrixFormat::Binary), ("a.csv", MatrixFormat::Csv)] {
        let path = dir.path().join(name);
        dump(&op, &path, fmt).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.matrix().unwrap(), op.matrix().unwrap());
        assert_eq!(back.order(), 0.45);
        assert_eq!(back.grid(), op.grid());
        for (x, y) in back.tail().iter().zip(op.tail()) {
            assert!((x - y).abs() < 1e-10 * y);
        }
    }
}

#[test]
fn block_extraction_respects_budget() {
    let g = Grid::new(2, 2.0, 129).unwrap();
    let op = assemble(&g, 0.5).unwrap();
    assert!(matches!(op.matrix(), Err(Error::OverBudget { .. })));
    let p = RegionPartition::interior_only(&g).unwrap();
    let b = op.block(&p.interior()[..10], &p.interior()[..10]);
    assert_eq!(b, b.transpose());
}
