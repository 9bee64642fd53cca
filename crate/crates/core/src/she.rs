//! Conservative implicit solver for `∂_t ρ = ∂_e(a(e) ∂_e ρ)` on `[0, e_max]` with
//! zero-flux ends, and the self-similar exponent fit.

use alloc::vec::Vec;

use crate::dcoeff::DiffusionCoefficientTable;
use crate::error::{Error, Result};
use crate::kinetics::EnergyProfile;
use crate::math::{ceil, exp, floor, linear_fit, ln, sqrt, PI};

/// Uniform cells `[kΔe, (k+1)Δe)`, `k = 0..K`, with `Δe = e_max / K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyGrid {
    e_max: f64,
    cells: usize,
}

impl EnergyGrid {
    pub fn new(e_max: f64, cells: usize) -> Result<Self> {
        if cells < 8 {
            return Err(Error::invalid("energy grid needs at least 8 cells"));
        }
        if !(e_max > 0.0 && e_max.is_finite()) {
            return Err(Error::invalid("e_max must be positive"));
        }
        Ok(EnergyGrid { e_max, cells })
    }

    pub fn e_max(&self) -> f64 {
        self.e_max
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn de(&self) -> f64 {
        self.e_max / self.cells as f64
    }

    pub fn center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.de()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|k| self.center(k)).collect()
    }

    /// Interior faces `e_{k+1/2} = (k+1)Δe`, `k = 0..K-1`.
    pub fn interior_faces(&self) -> Vec<f64> {
        (1..self.cells).map(|k| k as f64 * self.de()).collect()
    }

    pub fn profile(&self, density: Vec<f64>) -> Result<EnergyProfile> {
        if density.len() != self.cells {
            return Err(Error::GridMismatch);
        }
        Ok(EnergyProfile { e_centers: self.centers(), density, de: self.de() })
    }

    pub fn matches(&self, p: &EnergyProfile) -> bool {
        p.cells() == self.cells && (p.de - self.de()).abs() <= 1e-12 * self.de()
    }
}

/// Density, clock and face coefficients of a running solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SheState {
    pub grid: EnergyGrid,
    pub density: Vec<f64>,
    pub time: f64,
    /// `a` at the `K - 1` interior faces.
    pub a_faces: Vec<f64>,
}

impl SheState {
    pub fn new(grid: EnergyGrid, density: Vec<f64>, a_faces: Vec<f64>) -> Result<Self> {
        if density.len() != grid.cells() || a_faces.len() + 1 != grid.cells() {
            return Err(Error::GridMismatch);
        }
        if let Some(i) = a_faces.iter().position(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::NegativeCoefficient { index: i, value: a_faces[i] });
        }
        Ok(SheState { grid, density, time: 0.0, a_faces })
    }

    /// Faces from a coefficient table by linear interpolation.
    pub fn from_table(initial: &EnergyProfile, coeff: &DiffusionCoefficientTable) -> Result<Self> {
        let grid = EnergyGrid::new(initial.e_max(), initial.cells())?;
        if !grid.matches(initial) {
            return Err(Error::GridMismatch);
        }
        let es = coeff.e_values();
        if es[0] > 1e-12 * grid.e_max() || *es.last().unwrap() < grid.e_max() * (1.0 - 1e-12) {
            return Err(Error::invalid("coefficient table must cover [0, e_max]"));
        }
        let faces = grid.interior_faces().iter().map(|&e| coeff.interpolate(e)).collect();
        SheState::new(grid, initial.density.clone(), faces)
    }

    pub fn mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.grid.de()
    }

    pub fn profile(&self) -> EnergyProfile {
        EnergyProfile { e_centers: self.grid.centers(), density: self.density.clone(), de: self.grid.de() }
    }

    /// One backward-Euler step: `(I - dt·D) ρ' = ρ`, solved by the Thomas algorithm.
    ///
    /// The matrix is a diagonally dominant M-matrix with unit column sums, so the
    /// step keeps `ρ ≥ 0`, conserves mass and cannot raise the maximum.
    pub fn step_implicit(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt must be positive"));
        }
        let k = self.grid.cells();
        let de = self.grid.de();
        let r = dt / (de * de);
        // sub[i] couples i to i-1, sup[i] couples i to i+1
        let mut sup = alloc::vec![0.0; k];
        let mut diag = alloc::vec![1.0; k];
        for (i, &a) in self.a_faces.iter().enumerate() {
            let c = r * a;
            diag[i] += c;
            diag[i + 1] += c;
            sup[i] = -c;
        }
        // forward sweep; sub-diagonal equals the previous super-diagonal
        let mut cp = alloc::vec![0.0; k];
        let mut dp = alloc::vec![0.0; k];
        cp[0] = sup[0] / diag[0];
        dp[0] = self.density[0] / diag[0];
        for i in 1..k {
            let sub = sup[i - 1];
            let m = diag[i] - sub * cp[i - 1];
            cp[i] = sup[i] / m;
            dp[i] = (self.density[i] - sub * dp[i - 1]) / m;
        }
        let mut x = dp;
        for i in (0..k - 1).rev() {
            x[i] -= cp[i] * x[i + 1];
        }
        self.density = x;
        self.time += dt;
        Ok(())
    }
}

/// Narrow Gaussian of standard deviation `2Δe` at `e0`, restricted to the grid and
/// renormalized to unit mass.
pub fn delta_profile(grid: &EnergyGrid, e0: f64) -> Result<EnergyProfile> {
    if !(e0 >= 0.0 && e0 <= grid.e_max()) {
        return Err(Error::invalid("delta location must lie on the grid"));
    }
    let sd = 2.0 * grid.de();
    let d: Vec<f64> =
        grid.centers().iter().map(|&e| exp(-0.5 * ((e - e0) / sd) * ((e - e0) / sd)) / (sd * sqrt(2.0 * PI))).collect();
    Ok(grid.profile(d)?.normalized())
}

/// Cell averages of a density given pointwise (midpoint rule), renormalized.
pub fn sampled_profile<F: Fn(f64) -> f64>(grid: &EnergyGrid, density: F) -> Result<EnergyProfile> {
    let d = grid.centers().iter().map(|&e| density(e).max(0.0)).collect();
    let p = grid.profile(d)?;
    if !(p.mass() > 0.0) {
        return Err(Error::invalid("initial density has no mass on the grid"));
    }
    Ok(p.normalized())
}

/// Solution profile at one output time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub profile: EnergyProfile,
}

/// Integrates from `initial` to `t_end` with steps of at most `dt`, landing exactly on
/// each output time.
pub fn solve(
    initial: &EnergyProfile,
    coeff: &DiffusionCoefficientTable,
    t_end: f64,
    dt: f64,
    output_times: &[f64],
) -> Result<Vec<Snapshot>> {
    let mut state = SheState::from_table(initial, coeff)?;
    solve_state(&mut state, t_end, dt, output_times)
}

pub fn solve_state(state: &mut SheState, t_end: f64, dt: f64, output_times: &[f64]) -> Result<Vec<Snapshot>> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::invalid("dt must be positive and t_end non-negative"));
    }
    if output_times.iter().any(|&t| !(t >= state.time && t <= t_end)) || output_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("output times must be increasing within [t0, t_end]"));
    }
    let mut out = Vec::with_capacity(output_times.len());
    for &t in output_times {
        let span = t - state.time;
        if span > 0.0 {
            let steps = ceil(span / dt - 1e-9).max(1.0) as usize;
            let h = span / steps as f64;
            for _ in 0..steps {
                state.step_implicit(h)?;
            }
        }
        state.time = t;
        out.push(Snapshot { time: t, profile: state.profile() });
    }
    Ok(out)
}

/// Least-squares exponent of `median(t) ∝ t^β` over a time window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub beta: f64,
    pub stderr: f64,
    pub points: usize,
    pub window: (f64, f64),
}

/// Fraction of the mass tolerated within `2Δe` of `e_max`.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-6;

/// Mass in the cells whose centers lie within `2Δe` of `e_max`.
pub fn boundary_mass(p: &EnergyProfile) -> f64 {
    let e_max = p.e_max();
    p.e_centers.iter().zip(&p.density).filter(|(e, _)| e_max - **e <= 2.0 * p.de).map(|(_, d)| d * p.de).sum()
}

pub fn self_similar_fit(solutions: &[Snapshot], t_window: (f64, f64)) -> Result<ScalingFit> {
    let (lo, hi) = t_window;
    let inside: Vec<&Snapshot> = solutions.iter().filter(|s| s.time >= lo && s.time <= hi && s.time > 0.0).collect();
    if inside.len() < 5 {
        return Err(Error::InsufficientData("at least 5 output times are needed in the fit window".into()));
    }
    let mut xs = Vec::with_capacity(inside.len());
    let mut ys = Vec::with_capacity(inside.len());
    for s in &inside {
        let mass = s.profile.mass();
        let edge = boundary_mass(&s.profile);
        if edge > BOUNDARY_MASS_LIMIT * mass {
            return Err(Error::BoundaryContact { time: s.time, mass: edge / mass });
        }
        xs.push(ln(s.time));
        ys.push(ln(s.profile.median()));
    }
    let (beta, stderr, _) = linear_fit(&xs, &ys);
    Ok(ScalingFit { beta, stderr, points: inside.len(), window: t_window })
}

/// Profiles rescaled to unit mass and unit median, `p̂(x) = m·p(m x)/M`, sampled at
/// `x_points`; used to check self-similar collapse.
pub fn rescaled_profile(p: &EnergyProfile, x_points: &[f64]) -> Vec<f64> {
    let m = p.median();
    let mass = p.mass();
    x_points
        .iter()
        .map(|&x| {
            let e = x * m;
            // linear interpolation between cell centers
            let pos = e / p.de - 0.5;
            let value = if pos <= 0.0 {
                p.density[0]
            } else {
                let i = floor(pos) as usize;
                if i + 1 >= p.cells() {
                    0.0
                } else {
                    let w = pos - i as f64;
                    (1.0 - w) * p.density[i] + w * p.density[i + 1]
                }
            };
            m * value / mass
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcoeff::{CoefficientMethod, DiffusionCoefficientTable};

    fn constant_table(grid: &EnergyGrid, a: f64) -> DiffusionCoefficientTable {
        DiffusionCoefficientTable::new(
            alloc::vec![0.0, grid.e_max()],
            alloc::vec![a, a],
            CoefficientMethod::ClosedForm,
            None,
            1,
        )
        .unwrap()
    }

    #[test]
    fn grid_requires_eight_cells() {
        assert!(EnergyGrid::new(1.0, 7).is_err());
        assert!(EnergyGrid::new(0.0, 8).is_err());
        let g = EnergyGrid::new(2.0, 8).unwrap();
        assert_eq!(g.de(), 0.25);
        assert_eq!(g.center(0), 0.125);
        assert_eq!(g.interior_faces().len(), 7);
    }

    #[test]
    fn uniform_density_is_steady() {
        let g = EnergyGrid::new(4.0, 40).unwrap();
        let p = g.profile(alloc::vec![0.25; 40]).unwrap();
        let out = solve(&p, &constant_table(&g, 1.3), 1.0, 0.01, &[1.0]).unwrap();
        for d in &out[0].profile.density {
            assert!((d - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_coefficient_leaves_profile() {
        let g = EnergyGrid::new(4.0, 40).unwrap();
        let p = delta_profile(&g, 2.0).unwrap();
        let out = solve(&p, &constant_table(&g, 0.0), 1.0, 0.1, &[0.5, 1.0]).unwrap();
        assert_eq!(out[1].profile.density, p.density);
    }

    #[test]
    fn t_end_zero_returns_initial() {
        let g = EnergyGrid::new(4.0, 40).unwrap();
        let p = delta_profile(&g, 1.0).unwrap();
        let out = solve(&p, &constant_table(&g, 1.0), 0.0, 0.1, &[0.0]).unwrap();
        assert_eq!(out[0].profile, p);
    }

    #[test]
    fn negative_faces_rejected() {
        let g = EnergyGrid::new(1.0, 8).unwrap();
        let r = SheState::new(g, alloc::vec![1.0; 8], alloc::vec![1.0, 1.0, -0.1, 1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(r, Err(Error::NegativeCoefficient { index: 2, .. })));
    }

    #[test]
    fn delta_profile_has_unit_mass() {
        let g = EnergyGrid::new(6.0, 120).unwrap();
        let p = delta_profile(&g, 1.0).unwrap();
        assert!((p.mass() - 1.0).abs() < 1e-14);
        assert!((p.median() - 1.0).abs() < 0.5 * g.de());
    }

    #[test]
    fn fit_needs_five_points_and_free_boundary() {
        let g = EnergyGrid::new(4.0, 40).unwrap();
        let p = g.profile(alloc::vec![0.25; 40]).unwrap();
        let snaps: Vec<Snapshot> = (1..=4).map(|i| Snapshot { time: i as f64, profile: p.clone() }).collect();
        assert!(self_similar_fit(&snaps, (0.0, 10.0)).is_err());
        let snaps: Vec<Snapshot> = (1..=6).map(|i| Snapshot { time: i as f64, profile: p.clone() }).collect();
        assert!(matches!(self_similar_fit(&snaps, (0.0, 10.0)), Err(Error::BoundaryContact { .. })));
    }
}
