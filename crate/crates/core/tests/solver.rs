use gyroshe_core::dcoeff::DiffusionCoefficientTable;
use gyroshe_core::math::PI;
use gyroshe_core::she::{delta_profile, rescaled_profile, sampled_profile, solve, EnergyGrid};

fn closed_form_table(alpha: f64, e_max: f64, points: usize) -> DiffusionCoefficientTable {
    let e: Vec<f64> = (0..=points).map(|k| e_max * k as f64 / points as f64).collect();
    DiffusionCoefficientTable::closed_form(1.0, alpha, &e, 1).unwrap()
}

#[test]
fn refining_the_grid_converges() {
    let table = closed_form_table(4.0 / 3.0, 8.0, 8000);
    let bump = |e: f64| if (e - 3.0).abs() < 1.5 { (0.5 * PI * (e - 3.0) / 1.5).cos().powi(2) } else { 0.0 };
    let run = |cells: usize| {
        let grid = EnergyGrid::new(8.0, cells).unwrap();
        let init = sampled_profile(&grid, bump).unwrap();
        solve(&init, &table, 0.5, 1e-3, &[0.5]).unwrap().pop().unwrap().profile
    };
    let reference = run(1600);
    let error = |cells: usize| {
        let p = run(cells);
        let ratio = 1600 / cells;
        p.density
            .iter()
            .enumerate()
            .map(|(k, d)| {
                let avg = reference.density[k * ratio..(k + 1) * ratio].iter().sum::<f64>() / ratio as f64;
                (d - avg).abs() * p.de
            })
            .sum::<f64>()
    };
    let errs: Vec<f64> = [50, 100, 200].into_iter().map(error).collect();
    for w in errs.windows(2) {
        assert!(w[0] / w[1] >= 1.8, "errors {errs:?}");
    }
}

#[test]
fn profiles_collapse_under_rescaling() {
    let grid = EnergyGrid::new(100.0, 4000).unwrap();
    let table = closed_form_table(4.0 / 3.0, 100.0, 4000);
    let init = delta_profile(&grid, 0.0).unwrap();
    let snaps = solve(&init, &table, 10.0, 2e-3, &[2.0, 5.0, 10.0]).unwrap();
    let xs: Vec<f64> = (1..=300).map(|k| 0.01 * k as f64).collect();
    let dx = 0.01;
    let shapes: Vec<Vec<f64>> = snaps.iter().map(|s| rescaled_profile(&s.profile, &xs)).collect();
    for pair in shapes.windows(2) {
        let l1: f64 = pair[0].iter().zip(&pair[1]).map(|(a, b)| (a - b).abs() * dx).sum();
        assert!(l1 <= 0.05, "rescaled L1 {l1}");
    }
}
