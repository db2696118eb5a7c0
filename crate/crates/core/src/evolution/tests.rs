use super::*;
use crate::fracops::assemble;
use crate::lattice::{Grid, RegionSpec};
use crate::rng::{seeded, uniform_matrix};

struct Setup {
    grid: Grid,
    op: FracOperator,
    part: RegionPartition,
}

fn setup(n: usize, s: f64) -> Setup {
    let grid = Grid::new(1, 4.0, n).unwrap();
    let op = assemble(&grid, s).unwrap();
    let part = RegionPartition::new(&grid, &RegionSpec::intervals(&[(1.25, 2.5)])).unwrap();
    Setup { grid, op, part }
}

fn random_on(st: &Setup, time: TimeGrid, mask: &[usize], seed: u64) -> SpaceTimeField {
    let mut rng = seeded(seed);
    let vals = uniform_matrix(&mut rng, mask.len(), time.levels());
    SpaceTimeField::scatter(&st.grid, time, mask, &vals).unwrap()
}

fn rel_diff(a: &SpaceTimeField, b: &SpaceTimeField) -> f64 {
    let num: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.data().iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[test]
fn zero_data_gives_zero_trajectories() {
    let st = setup(65, 0.5);
    let t = TimeGrid::new(8).unwrap();
    let p = HeatProblem::new(&st.op, &st.part, t);
    assert_eq!(solve_heat(&p).unwrap().max_abs(), 0.0);
    assert_eq!(solve_heat(&p.with_direction(Direction::Adjoint)).unwrap().max_abs(), 0.0);
    assert_eq!(solve_wave(&WaveProblem::new(p)).unwrap().max_abs(), 0.0);
}

#[test]
fn rejects_data_off_its_mask() {
    let st = setup(65, 0.5);
    let t = TimeGrid::new(8).unwrap();
    let bad = random_on(&st, t, st.part.interior(), 1);
    let p = HeatProblem::new(&st.op, &st.part, t).with_exterior(&bad);
    assert!(matches!(solve_heat(&p), Err(Error::ShapeMismatch(_))));
    let p = HeatProblem::new(&st.op, &st.part, t).with_theta(0.3);
    assert!(matches!(solve_heat(&p), Err(Error::InvalidParameter { .. })));
}

#[test]
fn exterior_constraint_is_exact() {
    let st = setup(129, 0.4);
    let t = TimeGrid::new(16).unwrap();
    let f = random_on(&st, t, st.part.control(), 3);
    let u = solve_heat(&HeatProblem::new(&st.op, &st.part, t).with_exterior(&f)).unwrap();
    for k in 0..t.levels() {
        for &node in st.part.control() {
            assert_eq!(u.get(k, node), f.get(k, node));
        }
        for &node in st.part.zero() {
            assert_eq!(u.get(k, node), 0.0);
        }
    }
    // initial level holds f extended by zero
    for &node in st.part.interior() {
        assert_eq!(u.get(0, node), 0.0);
    }
}

#[test]
fn superposition() {
    let st = setup(129, 0.6);
    let t = TimeGrid::new(16).unwrap();
    let f1 = random_on(&st, t, st.part.control(), 4);
    let f2 = random_on(&st, t, st.part.control(), 5);
    let s1 = random_on(&st, t, st.part.interior(), 6);
    let s2 = random_on(&st, t, st.part.interior(), 7);
    let solve = |f: &SpaceTimeField, s: &SpaceTimeField| {
        solve_heat(&HeatProblem::new(&st.op, &st.part, t).with_exterior(f).with_source(s)).unwrap()
    };
    let (a, b) = (0.7, -1.3);
    let f = f1.combine(a, &f2, b).unwrap();
    let s = s1.combine(a, &s2, b).unwrap();
    let lhs = solve(&f, &s);
    let rhs = solve(&f1, &s1).combine(a, &solve(&f2, &s2), b).unwrap();
    assert!(rel_diff(&lhs, &rhs) < 1e-12);
}

fn ground_mode_errors(theta: f64) -> (f64, f64) {
    let st = setup(129, 0.5);
    let sp = dirichlet_spectrum(&st.op, &st.part, 1).unwrap();
    let lam = sp.values()[0];
    let phi = sp.lifted(0, st.grid.node_count());
    let err = |m: usize| {
        let t = TimeGrid::new(m).unwrap();
        let src = SpaceTimeField::constant_in_time(&st.grid, t, &phi).unwrap();
        let u = solve_heat(&HeatProblem::new(&st.op, &st.part, t).with_source(&src).with_theta(theta)).unwrap();
        let mut worst = 0.0f64;
        for k in 0..t.levels() {
            let amp = (1.0 - (-lam * (t.time(k) + 1.0)).exp()) / lam;
            for &node in st.part.interior() {
                worst = worst.max((u.get(k, node) - amp * phi[node]).abs());
            }
        }
        worst
    };
    (err(32), err(64))
}

#[test]
fn implicit_euler_matches_modal_closed_form_to_first_order() {
    let (e1, e2) = ground_mode_errors(1.0);
    let rate = (e1 / e2).log2();
    assert!(e1 < 0.05 && (rate - 1.0).abs() < 0.2, "{e1} {e2} rate {rate}");
}

#[test]
fn crank_nicolson_matches_modal_closed_form_to_second_order() {
    let (e1, e2) = ground_mode_errors(0.5);
    let rate = (e1 / e2).log2();
    assert!(e1 < 5e-3 && (rate - 2.0).abs() < 0.2, "{e1} {e2} rate {rate}");
}

#[test]
fn galerkin_full_rank_agrees_with_full_grid() {
    let st = setup(129, 0.5);
    let t = TimeGrid::new(32).unwrap();
    let k = st.part.interior().len();
    let sp = dirichlet_spectrum(&st.op, &st.part, k).unwrap();
    for theta in [1.0, 0.5] {
        for seed in 0..5 {
            let src = random_on(&st, t, st.part.interior(), 100 + seed);
            for dir in [Direction::Forward, Direction::Adjoint] {
                let p = HeatProblem::new(&st.op, &st.part, t)
                    .with_source(&src)
                    .with_theta(theta)
                    .with_direction(dir);
                let a = solve_heat(&p).unwrap();
                let b = solve_heat_galerkin_with(&p, &sp, k).unwrap();
                assert!(rel_diff(&b, &a) <= 1e-8, "θ={theta} {dir:?}: {}", rel_diff(&b, &a));
            }
        }
    }
}

#[test]
fn single_mode_ignores_orthogonal_source() {
    let st = setup(129, 0.5);
    let t = TimeGrid::new(16).unwrap();
    let sp = dirichlet_spectrum(&st.op, &st.part, 2).unwrap();
    let phi2 = sp.lifted(1, st.grid.node_count());
    let src = SpaceTimeField::constant_in_time(&st.grid, t, &phi2).unwrap();
    let p = HeatProblem::new(&st.op, &st.part, t).with_source(&src);
    let u = solve_heat_galerkin_with(&p, &sp, 1).unwrap();
    assert!(u.max_abs() < 1e-12);
    assert!(solve_heat_galerkin_with(&p, &sp, 3).is_err());
}

#[test]
fn galerkin_error_decreases_with_modes() {
    let st = setup(129, 0.5);
    let t = TimeGrid::new(16).unwrap();
    let mut rng = seeded(9);
    let coords: Vec<f64> = st.part.interior().iter().map(|&k| st.grid.axis()[k]).collect();
    let vals = crate::rng::smooth_trajectory(&mut rng, &coords, -1.0, 1.0, &t.times(), 4);
    let src = SpaceTimeField::scatter(&st.grid, t, st.part.interior(), &vals).unwrap();
    let p = HeatProblem::new(&st.op, &st.part, t).with_source(&src);
    let full = solve_heat(&p).unwrap();
    let sp = dirichlet_spectrum(&st.op, &st.part, 16).unwrap();
    let errs: Vec<f64> = [1, 2, 4, 8, 16]
        .iter()
        .map(|&k| rel_diff(&solve_heat_galerkin_with(&p, &sp, k).unwrap(), &full))
        .collect();
    assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
}

#[test]
fn heat_is_dissipative() {
    let st = setup(129, 0.3);
    let t = TimeGrid::new(32).unwrap();
    let u0 = st.grid.sample(|x| if x[0].abs() < 1.0 { 1.0 - x[0] * x[0] } else { 0.0 });
    let u0: Vec<f64> = (0..u0.len())
        .map(|k| if st.part.kind(k) == NodeKind::Interior { u0[k] } else { 0.0 })
        .collect();
    let u = solve_heat(&HeatProblem::new(&st.op, &st.part, t).with_initial(&u0)).unwrap();
    let norms: Vec<f64> = (0..t.levels())
        .map(|k| st.part.interior().iter().map(|&n| u.get(k, n).powi(2)).sum::<f64>())
        .collect();
    assert!(norms[0] > 0.0);
    assert!(norms.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn duality_holds_to_rounding() {
    let st = setup(129, 0.5);
    let t = TimeGrid::new(32).unwrap();
    for theta in [1.0, 0.5] {
        for seed in 0..20 {
            let f = random_on(&st, t, st.part.control(), 200 + seed);
            let v = random_on(&st, t, st.part.interior(), 300 + seed);
            let r = duality_residual(&f, &v, &st.op, &st.part, theta).unwrap();
            assert!(r <= 1e-10, "θ={theta} seed {seed}: {r}");
        }
    }
    let zero = SpaceTimeField::zeros(&st.grid, t);
    let v = random_on(&st, t, st.part.interior(), 1);
    let f = random_on(&st, t, st.part.control(), 2);
    assert_eq!(duality_residual(&zero, &v, &st.op, &st.part, 1.0).unwrap(), 0.0);
    assert_eq!(duality_residual(&f, &zero, &st.op, &st.part, 1.0).unwrap(), 0.0);
}

#[test]
fn wave_adjoint_is_the_transpose() {
    let st = setup(129, 0.5);
    let t = TimeGrid::new(32).unwrap();
    let w = WaveStepper::new(&st.op, &st.part, t).unwrap();
    let c = w.coupling();
    let mut rng = seeded(11);
    for _ in 0..5 {
        let g = uniform_matrix(&mut rng, c.interior.len(), t.levels());
        let psi = uniform_matrix(&mut rng, c.interior.len(), t.levels());
        let lhs = c.dot(&w.propagate(&g), &psi);
        let rhs = c.dot(&g, &w.propagate_adjoint(&psi));
        assert!((lhs - rhs).abs() <= 1e-12 * (c.dot(&g, &g) * c.dot(&psi, &psi)).sqrt());
    }
}

#[test]
fn wave_mode_oscillates() {
    let st = setup(129, 0.5);
    let sp = dirichlet_spectrum(&st.op, &st.part, 1).unwrap();
    let omega = sp.values()[0].sqrt();
    let phi = sp.lifted(0, st.grid.node_count());
    let err = |m: usize| {
        let t = TimeGrid::new(m).unwrap();
        let base = HeatProblem::new(&st.op, &st.part, t).with_initial(&phi);
        let u = solve_wave(&WaveProblem::new(base)).unwrap();
        let mut worst = 0.0f64;
        for k in 0..t.levels() {
            let amp = (omega * (t.time(k) + 1.0)).cos();
            for &node in st.part.interior() {
                worst = worst.max((u.get(k, node) - amp * phi[node]).abs());
            }
        }
        worst
    };
    let (e1, e2) = (err(32), err(64));
    let rate = (e1 / e2).log2();
    assert!((rate - 2.0).abs() < 0.2, "{e1} {e2} {rate}");
}

#[test]
fn wave_energy_is_conserved() {
    let st = setup(129, 0.5);
    let t = TimeGrid::new(64).unwrap();
    let w = WaveStepper::new(&st.op, &st.part, t).unwrap();
    let c = w.coupling();
    let mut rng = seeded(12);
    let u0 = uniform_matrix(&mut rng, c.interior.len(), 1).column(0).into_owned();
    let w0 = uniform_matrix(&mut rng, c.interior.len(), 1).column(0).into_owned();
    let g = DMatrix::zeros(c.interior.len(), t.levels());
    let (u, v) = w.propagate_from(&g, Some(&u0), Some(&w0));
    let e = w.energy(&u, &v);
    let drift = e.iter().map(|x| (x - e[0]).abs()).fold(0.0, f64::max) / e[0];
    assert!(drift <= 1e-8, "{drift}");
}

#[test]
fn energy_report_trivial_and_modal() {
    let st = setup(129, 0.5);
    let t = TimeGrid::new(64).unwrap();
    let p = HeatProblem::new(&st.op, &st.part, t);
    let zero = solve_heat(&p).unwrap();
    let r = energy_report(&zero, &p).unwrap();
    assert_eq!((r.sup_l2, r.l2_hs, r.dt_dual_surrogate, r.observed_constant), (0.0, 0.0, 0.0, 0.0));

    let sp = dirichlet_spectrum(&st.op, &st.part, 1).unwrap();
    let lam = sp.values()[0];
    let phi = sp.lifted(0, st.grid.node_count());
    let src = SpaceTimeField::constant_in_time(&st.grid, t, &phi).unwrap();
    let p = p.with_source(&src);
    let u = solve_heat(&p).unwrap();
    let r = energy_report(&u, &p).unwrap();
    // v = a(t) φ₁ with a = (1 − e^{−λ(t+1)})/λ and ‖φ₁‖ = 1
    let sup = (1.0 - (-2.0 * lam).exp()) / lam;
    let int_a2 = {
        let e = |t: f64| (-lam * (t + 1.0)).exp();
        let f = |t: f64| (t + 1.0) + 2.0 * (e(t) - 1.0) / lam - (e(t).powi(2) - 1.0) / (2.0 * lam);
        f(1.0) / (lam * lam)
    };
    let hs = ((lam + 1.0) * int_a2).sqrt();
    let dual = ((1.0 - (-4.0 * lam).exp()) / (2.0 * lam) / lam).sqrt();
    assert!((r.sup_l2 - sup).abs() < 0.05 * sup, "{} {sup}", r.sup_l2);
    assert!((r.l2_hs - hs).abs() < 0.05 * hs, "{} {hs}", r.l2_hs);
    assert!((r.dt_dual_surrogate - dual).abs() < 0.05 * dual, "{} {dual}", r.dt_dual_surrogate);
    assert!((r.source_l2 - 2f64.sqrt()).abs() < 1e-10);
}

#[test]
fn energy_constant_is_stable_across_draws_and_grids() {
    let mut constants = Vec::new();
    for n in [129, 257] {
        let st = setup(n, 0.5);
        let t = TimeGrid::new(32).unwrap();
        for seed in 0..20 {
            let src = random_on(&st, t, st.part.interior(), 500 + seed);
            let p = HeatProblem::new(&st.op, &st.part, t).with_source(&src);
            let u = solve_heat(&p).unwrap();
            constants.push(energy_report(&u, &p).unwrap().observed_constant);
        }
    }
    let max = constants.iter().cloned().fold(0.0, f64::max);
    let min = constants.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(min > 0.0 && max < 10.0, "{min} {max}");
}
