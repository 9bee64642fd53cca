use gyroshe_core::dcoeff::{orbit_chord, DiffusionCoefficientTable};
use gyroshe_core::harness::compare;
use gyroshe_core::kinetics::{free_flow, gyro_average_histogram, EnergyProfile};
use gyroshe_core::math::{Vec2, PI};
use gyroshe_core::she::{EnergyGrid, SheState};
use proptest::prelude::*;

fn profile(values: &[f64]) -> EnergyProfile {
    let de = 0.1;
    EnergyProfile::from_parts((0..values.len()).map(|k| (k as f64 + 0.5) * de).collect(), values.to_vec()).unwrap()
}

proptest! {
    #[test]
    fn distances_are_symmetric_metrics(
        p in prop::collection::vec(0.0..5.0f64, 12),
        q in prop::collection::vec(0.0..5.0f64, 12),
        r in prop::collection::vec(0.0..5.0f64, 12),
    ) {
        let (p, q, r) = (profile(&p), profile(&q), profile(&r));
        let pq = compare(&p, &q).unwrap();
        let qp = compare(&q, &p).unwrap();
        prop_assert_eq!(pq, qp);
        prop_assert!(pq.l1 >= 0.0 && pq.l2 >= 0.0 && pq.w1 >= 0.0);
        let pp = compare(&p, &p).unwrap();
        prop_assert_eq!((pp.l1, pp.l2, pp.w1), (0.0, 0.0, 0.0));
        let pr = compare(&p, &r).unwrap().l1;
        let rq = compare(&r, &q).unwrap().l1;
        prop_assert!(pq.l1 <= pr + rq + 1e-12);
    }

    #[test]
    fn implicit_step_conserves_mass_and_sign(
        density in prop::collection::vec(0.0..3.0f64, 20),
        faces in prop::collection::vec(0.0..10.0f64, 19),
        dt in 1e-5..10.0f64,
    ) {
        let grid = EnergyGrid::new(5.0, 20).unwrap();
        let mut s = SheState::new(grid, density, faces).unwrap();
        let m0 = s.mass();
        let max0 = s.density.iter().cloned().fold(0.0, f64::max);
        for _ in 0..5 {
            s.step_implicit(dt).unwrap();
        }
        prop_assert!((s.mass() - m0).abs() <= 1e-12 * m0.max(1.0));
        prop_assert!(s.density.iter().all(|&d| d >= 0.0));
        prop_assert!(s.density.iter().cloned().fold(0.0, f64::max) <= max0 * (1.0 + 1e-12));
    }

    #[test]
    fn free_flow_is_a_group_preserving_speed(
        x in (-1.0..1.0f64, -1.0..1.0f64),
        v in (-3.0..3.0f64, -3.0..3.0f64),
        t1 in -2.0..2.0f64,
        t2 in -2.0..2.0f64,
        eps in 0.01..1.0f64,
    ) {
        let (x, v) = (Vec2::new(x.0, x.1), Vec2::new(v.0, v.1));
        let (x1, v1) = free_flow(x, v, t1, eps);
        let (x2, v2) = free_flow(x1, v1, t2, eps);
        let (x3, v3) = free_flow(x, v, t1 + t2, eps);
        prop_assert!((v1.norm() - v.norm()).abs() <= 1e-12 * (1.0 + v.norm()));
        prop_assert!((x2 - x3).norm() <= 1e-10 && (v2 - v3).norm() <= 1e-10);
        let (xp, vp) = free_flow(x, v, 2.0 * PI * eps, eps);
        prop_assert!((xp - x).norm() <= 1e-10 && (vp - v).norm() <= 1e-10);
    }

    #[test]
    fn orbit_chord_is_distance_between_orbit_points(e in 0.0..20.0f64, s in -30.0..30.0f64) {
        let v = Vec2::new((2.0 * e).sqrt(), 0.0);
        let chord = (v.perp() - v.perp().rotate(-s)).norm();
        prop_assert!((orbit_chord(e, s) - chord).abs() <= 1e-10 * (1.0 + chord));
    }

    #[test]
    fn histogram_mass_is_in_range_fraction(samples in prop::collection::vec(0.0..12.0f64, 1..300)) {
        let h = gyro_average_histogram(&samples, 10.0, 25).unwrap();
        let inside = samples.len() - h.out_of_range;
        prop_assert!((h.profile.mass() - inside as f64 / samples.len() as f64).abs() <= 1e-12);
    }

    #[test]
    fn interpolation_stays_between_neighbours(
        values in prop::collection::vec(0.0..4.0f64, 6),
        e in -1.0..7.0f64,
    ) {
        let grid: Vec<f64> = (0..6).map(|k| k as f64).collect();
        let t = DiffusionCoefficientTable::new(grid, values.clone(), gyroshe_core::dcoeff::CoefficientMethod::Quadrature, None, 1).unwrap();
        let a = t.interpolate(e);
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(0.0, f64::max);
        prop_assert!(a >= lo - 1e-12 && a <= hi + 1e-12);
    }
}
