//! Spatial and temporal discretisation: grids, region masks, the smooth
//! cutoff on the control region, space-time fields and their norms.

mod field;
mod grid;
mod region;

pub use field::{fmt_num, norm_h1, norm_h2, norm_l2, SpaceTimeField, SpaceTimeInner};
pub use grid::{Grid, GridShape, TimeGrid};
pub use region::{smooth_ramp, Cutoff, CutoffProfile, NodeKind, Region, RegionPartition, RegionSpec};

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn setup() -> (Grid, TimeGrid, RegionPartition) {
        let g = Grid::new(1, 2.0, 33).unwrap();
        let t = TimeGrid::new(6).unwrap();
        let p = RegionPartition::new(&g, &RegionSpec::intervals(&[(1.3, 1.9)])).unwrap();
        (g, t, p)
    }

    proptest! {
        #[test]
        fn l2_is_a_norm(
            a in proptest::collection::vec(-10.0f64..10.0, 33 * 7),
            b in proptest::collection::vec(-10.0f64..10.0, 33 * 7),
            c in -5.0f64..5.0,
        ) {
            let (g, t, p) = setup();
            let fa = SpaceTimeField::from_data(&g, t, a).unwrap();
            let fb = SpaceTimeField::from_data(&g, t, b).unwrap();
            let na = norm_l2(&g, &fa, p.interior(), 0..=6).unwrap();
            let nb = norm_l2(&g, &fb, p.interior(), 0..=6).unwrap();
            let sum = fa.combine(1.0, &fb, 1.0).unwrap();
            let ns = norm_l2(&g, &sum, p.interior(), 0..=6).unwrap();
            prop_assert!(ns <= (na + nb) * (1.0 + 1e-12));
            let nc = norm_l2(&g, &fa.scaled(c), p.interior(), 0..=6).unwrap();
            prop_assert!((nc - c.abs() * na).abs() <= 1e-12 * (na * c.abs()).max(1e-300));
        }

        #[test]
        fn masks_partition_the_nodes(a in 1.2f64..2.0, w in 0.2f64..1.5) {
            let g = Grid::new(1, 4.0, 129).unwrap();
            if let Ok(p) = RegionPartition::new(&g, &RegionSpec::intervals(&[(a, (a + w).min(3.9))])) {
                let mut seen = vec![0u8; g.node_count()];
                for &k in p.interior().iter().chain(p.control()).chain(p.zero()) {
                    seen[k] += 1;
                }
                prop_assert!(seen.iter().all(|&s| s == 1));
                if let Ok(eta) = Cutoff::new(&g, &p, CutoffProfile::Quintic) {
                    for k in 0..g.node_count() {
                        let v = eta.values()[k];
                        prop_assert!((0.0..=1.0).contains(&v));
                        if p.kind(k) != NodeKind::Control {
                            prop_assert_eq!(v, 0.0);
                        }
                        if eta.in_half_region(&g, &p, k) {
                            prop_assert_eq!(v, 1.0);
                        }
                    }
                }
            }
        }
    }
}
