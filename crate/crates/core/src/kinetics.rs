//! Particle ensembles under the rescaled characteristics
//!
//! ```text
//! dx/dt = v,   dv/dt = v⊥/ε + ε^{-1/2} ∇V(t/(2πnε), x/ε)
//! ```
//!
//! integrated by kick / exact gyration / kick splitting, plus the gyro-averaged
//! energy histograms compared against the SHE limit.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::field::{synthesize_window, FieldRealization, FieldSpec};
use crate::math::{ceil, cos, sin_cos, sqrt, wrap, Vec2, PI};
use crate::rng::{derive_seed, Stage, StageRng};
use rand::SeedableRng;

/// Side of the periodic square holding the particle positions.
pub const DOMAIN_SIDE: f64 = 1.0;

/// Default number of steps per gyro-period.
pub const STEPS_PER_GYRO: usize = 64;

/// Exact field-free flow over time `t`: `v' = R_{t/ε} v`, `x' = x + ε(v⊥ - R_{t/ε} v⊥)`.
///
/// `R_θ` rotates counterclockwise, so `dv/dt = v⊥/ε`. The flow is a group in `t`
/// and `t < 0` runs it backwards.
pub fn free_flow(x: Vec2, v: Vec2, t: f64, eps: f64) -> (Vec2, Vec2) {
    let (s, c) = sin_cos(t / eps);
    free_flow_sc(x, v, s, c, eps)
}

#[inline]
fn free_flow_sc(x: Vec2, v: Vec2, s: f64, c: f64, eps: f64) -> (Vec2, Vec2) {
    let vp = v.perp();
    let rv = v.rotate_sc(s, c);
    let rvp = rv.perp();
    (x + eps * (vp - rvp), rv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    StrangKRK,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PushConfig {
    pub dt: f64,
    pub t_end: f64,
    pub output_times: Vec<f64>,
    pub scheme: Scheme,
}

impl PushConfig {
    /// `STEPS_PER_GYRO` steps per gyro-period `2πε`.
    pub fn for_epsilon(eps: f64, t_end: f64, output_times: Vec<f64>) -> Self {
        Self::with_steps_per_gyro(eps, STEPS_PER_GYRO, t_end, output_times)
    }

    pub fn with_steps_per_gyro(eps: f64, steps: usize, t_end: f64, output_times: Vec<f64>) -> Self {
        PushConfig { dt: 2.0 * PI * eps / steps as f64, t_end, output_times, scheme: Scheme::StrangKRK }
    }

    pub fn validate(&self, eps: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt must be positive"));
        }
        if self.dt > 2.0 * PI * eps / 16.0 * (1.0 + 1e-12) {
            return Err(Error::invalid("dt must not exceed 2πε/16"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::invalid("t_end must be finite and non-negative"));
        }
        if self.output_times.iter().any(|&t| !(t >= 0.0 && t <= self.t_end)) {
            return Err(Error::invalid("output times must lie in [0, t_end]"));
        }
        if self.output_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("output times must be strictly increasing"));
        }
        Ok(())
    }
}

/// Particles on the periodic square with common `ε`, `n` and clock `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub x: Vec<Vec2>,
    pub v: Vec<Vec2>,
    eps: f64,
    n: u32,
    pub t: f64,
}

impl ParticleEnsemble {
    pub fn new(x: Vec<Vec2>, v: Vec<Vec2>, eps: f64, n: u32) -> Result<Self> {
        if x.is_empty() || x.len() != v.len() {
            return Err(Error::invalid("ensemble needs equally many positions and velocities (at least one)"));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if n == 0 {
            return Err(Error::invalid("resonance number n must be at least 1"));
        }
        if x.iter().chain(&v).any(|p| !p.is_finite()) {
            return Err(Error::invalid("particle coordinates must be finite"));
        }
        Ok(ParticleEnsemble { x, v, eps, n, t: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn energies(&self) -> Vec<f64> {
        self.v.iter().map(|v| 0.5 * v.norm_sq()).collect()
    }

    /// Kick acceleration `ε^{-1/2} ∇V(t/(2πnε), x/ε)` of particle at `x`.
    #[inline]
    fn force(&self, field: Option<&FieldRealization>, t: f64, x: Vec2) -> Vec2 {
        match field {
            None => Vec2::ZERO,
            Some(f) => {
                let tau = t / (2.0 * PI * self.n as f64 * self.eps);
                (1.0 / sqrt(self.eps)) * f.evaluate_gradient(tau, (1.0 / self.eps) * x)
            }
        }
    }

    fn forces(&self, field: Option<&FieldRealization>) -> Vec<Vec2> {
        self.x.iter().map(|&x| self.force(field, self.t, x)).collect()
    }

    /// One kick-flow-kick step of signed length `dt`; a negative `dt` undoes a
    /// positive one. `None` means zero field.
    pub fn strang_step(&mut self, field: Option<&FieldRealization>, dt: f64) {
        let mut f = self.forces(field);
        self.step_cached(field, dt, &mut f);
    }

    /// Step with `forces` holding the kick at the current state on entry and at the
    /// new state on exit, so consecutive steps need one field evaluation each.
    fn step_cached(&mut self, field: Option<&FieldRealization>, dt: f64, forces: &mut [Vec2]) {
        let (s, c) = sin_cos(dt / self.eps);
        let t1 = self.t + dt;
        for i in 0..self.x.len() {
            let v = self.v[i] + (0.5 * dt) * forces[i];
            let (x, v) = free_flow_sc(self.x[i], v, s, c, self.eps);
            let x = Vec2::new(wrap(x.x, DOMAIN_SIDE), wrap(x.y, DOMAIN_SIDE));
            forces[i] = self.force(field, t1, x);
            self.x[i] = x;
            self.v[i] = v + (0.5 * dt) * forces[i];
        }
        self.t = t1;
    }

    /// Advances to `t_target` in steps of at most `|dt|`, landing exactly on it.
    pub fn advance_to(&mut self, field: Option<&FieldRealization>, t_target: f64, dt: f64) {
        let span = t_target - self.t;
        if span == 0.0 {
            return;
        }
        let steps = ceil(span.abs() / dt.abs() - 1e-9).max(1.0) as usize;
        let h = span / steps as f64;
        let start = self.t;
        let mut f = self.forces(field);
        for k in 0..steps {
            self.step_cached(field, h, &mut f);
            if k + 1 < steps {
                // keep the clock free of accumulated roundoff; forces were
                // evaluated at the pre-correction time, which differs by ulps
                self.t = start + h * (k + 1) as f64;
            }
        }
        self.t = t_target;
    }
}

/// Initial law of the particle energies; gyro-phases and positions are uniform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialDistribution {
    Delta {
        e0: f64,
    },
    /// Density `∝ cos²(π(e - center)/(2 half_width))` on `[center - half_width, center + half_width] ∩ [0, ∞)`.
    SmoothBump {
        center: f64,
        half_width: f64,
    },
}

impl InitialDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialDistribution::Delta { e0 } if e0 >= 0.0 && e0.is_finite() => Ok(()),
            InitialDistribution::SmoothBump { center, half_width }
                if half_width > 0.0 && center.is_finite() && half_width.is_finite() && center + half_width > 0.0 =>
            {
                Ok(())
            }
            _ => Err(Error::invalid("invalid initial distribution parameters")),
        }
    }

    /// Probability density of the energy.
    pub fn density(&self, e: f64) -> Option<f64> {
        match *self {
            InitialDistribution::Delta { .. } => None,
            InitialDistribution::SmoothBump { center, half_width } => {
                if e < 0.0 || (e - center).abs() > half_width {
                    return Some(0.0);
                }
                let c = cos(0.5 * PI * (e - center) / half_width);
                Some(c * c / self.bump_mass())
            }
        }
    }

    fn bump_mass(&self) -> f64 {
        match *self {
            InitialDistribution::SmoothBump { center, half_width } => {
                // ∫ cos² over [max(0, c - w), c + w]
                let prim = |e: f64| {
                    let u = 0.5 * PI * (e - center) / half_width;
                    half_width / PI * (u + 0.5 * crate::math::sin(2.0 * u))
                };
                prim(center + half_width) - prim((center - half_width).max(0.0))
            }
            InitialDistribution::Delta { .. } => 1.0,
        }
    }

    pub fn sample_energy<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InitialDistribution::Delta { e0 } => e0,
            InitialDistribution::SmoothBump { center, half_width } => loop {
                let e = center + half_width * (2.0 * rng.gen::<f64>() - 1.0);
                if e < 0.0 {
                    continue;
                }
                let c = cos(0.5 * PI * (e - center) / half_width);
                if rng.gen::<f64>() < c * c {
                    break e;
                }
            },
        }
    }
}

/// Draws `count` particles from `init` with uniform positions and gyro-phases.
pub fn sample_ensemble(
    init: &InitialDistribution,
    count: usize,
    eps: f64,
    n: u32,
    seed: u64,
) -> Result<ParticleEnsemble> {
    init.validate()?;
    let mut rng = StageRng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(count);
    let mut v = Vec::with_capacity(count);
    for _ in 0..count {
        let e = init.sample_energy(&mut rng);
        let theta = 2.0 * PI * rng.gen::<f64>();
        let (s, c) = sin_cos(theta);
        let speed = sqrt(2.0 * e);
        v.push(Vec2::new(speed * c, speed * s));
        x.push(Vec2::new(DOMAIN_SIDE * rng.gen::<f64>(), DOMAIN_SIDE * rng.gen::<f64>()));
    }
    ParticleEnsemble::new(x, v, eps, n)
}

/// Energies of all particles at one output time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRecord {
    pub time: f64,
    pub energies: Vec<f64>,
}

/// Runs one field realization: particles from `(seed, Particles, realization)`, field
/// from `(seed, FieldRealization, realization)`, so the two are independent.
pub fn simulate_ensemble(
    init: &InitialDistribution,
    spec: &FieldSpec,
    eps: f64,
    n: u32,
    particles: usize,
    cfg: &PushConfig,
    seed: u64,
    realization_index: u64,
) -> Result<Vec<EnergyRecord>> {
    cfg.validate(eps)?;
    let mut ens = sample_ensemble(init, particles, eps, n, derive_seed(seed, Stage::Particles, realization_index))?;
    let field_spec = spec.clone().with_master_seed(derive_seed(seed, Stage::FieldRealization, 0));
    let tau_end = cfg.t_end / (2.0 * PI * n as f64 * eps);
    let real = synthesize_window(&field_spec, realization_index, -1.0, tau_end + 1.0);
    let mut out = Vec::with_capacity(cfg.output_times.len());
    for &t in &cfg.output_times {
        ens.advance_to(Some(&real), t, cfg.dt);
        out.push(EnergyRecord { time: t, energies: ens.energies() });
    }
    Ok(out)
}

/// Probability density in `e` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyProfile {
    pub e_centers: Vec<f64>,
    pub density: Vec<f64>,
    pub de: f64,
}

impl EnergyProfile {
    /// Zero density on `cells` uniform cells of `[0, e_max]`.
    pub fn zeros(e_max: f64, cells: usize) -> Result<Self> {
        if !(e_max > 0.0 && e_max.is_finite()) || cells == 0 {
            return Err(Error::invalid("energy grid needs e_max > 0 and at least one cell"));
        }
        let de = e_max / cells as f64;
        Ok(EnergyProfile {
            e_centers: (0..cells).map(|k| (k as f64 + 0.5) * de).collect(),
            density: alloc::vec![0.0; cells],
            de,
        })
    }

    /// Builds a profile from cell centers of a uniform grid starting at 0.
    pub fn from_parts(e_centers: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if e_centers.len() < 2 || e_centers.len() != density.len() {
            return Err(Error::invalid("profile needs at least two cells and matching columns"));
        }
        let de = e_centers[1] - e_centers[0];
        let uniform = e_centers
            .iter()
            .enumerate()
            .all(|(k, &e)| (e - (k as f64 + 0.5) * de).abs() <= 1e-9 * de * (k as f64 + 1.0));
        if !(de > 0.0) || !uniform {
            return Err(Error::GridMismatch);
        }
        Ok(EnergyProfile { e_centers, density, de })
    }

    pub fn cells(&self) -> usize {
        self.density.len()
    }

    pub fn e_max(&self) -> f64 {
        self.de * self.cells() as f64
    }

    pub fn mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.de
    }

    pub fn same_grid(&self, other: &EnergyProfile) -> bool {
        self.cells() == other.cells() && (self.de - other.de).abs() <= 1e-12 * self.de
    }

    /// Rescales to unit mass; a zero profile is left unchanged.
    pub fn normalized(mut self) -> Self {
        let m = self.mass();
        if m > 0.0 {
            self.density.iter_mut().for_each(|d| *d /= m);
        }
        self
    }

    /// Energy below which half of the mass lies (linear within the cell).
    pub fn median(&self) -> f64 {
        let total = self.mass();
        let half = 0.5 * total;
        let mut acc = 0.0;
        for (k, &d) in self.density.iter().enumerate() {
            let m = d * self.de;
            if acc + m >= half && m > 0.0 {
                return (k as f64 + (half - acc) / m) * self.de;
            }
            acc += m;
        }
        self.e_max()
    }
}

/// Normalized histogram together with the count of samples outside `[0, e_max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub profile: EnergyProfile,
    pub out_of_range: usize,
}

/// Gyro-averaged energy density: histogram of the samples divided by `count · Δe`.
/// Out-of-range samples stay in the normalization, so the in-grid mass is
/// `1 - out_of_range / count`.
pub fn gyro_average_histogram(samples: &[f64], e_max: f64, cells: usize) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no energy samples".into()));
    }
    let mut profile = EnergyProfile::zeros(e_max, cells)?;
    let mut out = 0;
    for &e in samples {
        let k = (e / profile.de) as isize;
        if e >= 0.0 && (k as usize) < cells && e.is_finite() {
            profile.density[k as usize] += 1.0;
        } else {
            out += 1;
        }
    }
    let norm = 1.0 / (samples.len() as f64 * profile.de);
    profile.density.iter_mut().for_each(|d| *d *= norm);
    Ok(Histogram { profile, out_of_range: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::SpatialProfile;

    fn rk4_free(x: Vec2, v: Vec2, t: f64, eps: f64, steps: usize) -> (Vec2, Vec2) {
        let h = t / steps as f64;
        let (mut x, mut v) = (x, v);
        let f = |v: Vec2| (v, (1.0 / eps) * v.perp());
        for _ in 0..steps {
            let (k1x, k1v) = f(v);
            let (k2x, k2v) = f(v + (0.5 * h) * k1v);
            let (k3x, k3v) = f(v + (0.5 * h) * k2v);
            let (k4x, k4v) = f(v + h * k3v);
            x += (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
            v += (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        }
        (x, v)
    }

    #[test]
    fn half_period_example() {
        let (x, v) = free_flow(Vec2::ZERO, Vec2::new(1.0, 0.0), PI, 1.0);
        assert!((v - Vec2::new(-1.0, 0.0)).norm() < 1e-15);
        assert!((x - Vec2::new(0.0, 2.0)).norm() < 1e-15);
        let (xr, vr) = rk4_free(Vec2::ZERO, Vec2::new(1.0, 0.0), PI, 1.0, 20_000);
        assert!((x - xr).norm() < 1e-9 && (v - vr).norm() < 1e-9);
    }

    #[test]
    fn identity_and_period() {
        let x = Vec2::new(0.3, -0.2);
        let v = Vec2::new(0.7, 1.1);
        assert_eq!(free_flow(x, v, 0.0, 0.1), (x, v));
        let (x1, v1) = free_flow(x, v, 2.0 * PI * 0.1 * 3.0, 0.1);
        assert!((x1 - x).norm() < 1e-13 && (v1 - v).norm() < 1e-13);
    }

    #[test]
    fn negative_time_inverts() {
        let x = Vec2::new(0.3, -0.2);
        let v = Vec2::new(0.7, 1.1);
        let (x1, v1) = free_flow(x, v, 0.37, 0.05);
        let (x2, v2) = free_flow(x1, v1, -0.37, 0.05);
        assert!((x2 - x).norm() < 1e-14 && (v2 - v).norm() < 1e-14);
    }

    #[test]
    fn zero_field_step_matches_free_flow() {
        let x = Vec2::new(0.5, 0.5);
        let v = Vec2::new(0.2, -1.0);
        let mut ens = ParticleEnsemble::new(alloc::vec![x], alloc::vec![v], 0.05, 1).unwrap();
        ens.strang_step(None, 0.01);
        let (x1, v1) = free_flow(x, v, 0.01, 0.05);
        assert_eq!(ens.v[0], v1);
        assert!((ens.x[0] - x1).norm() < 1e-15);
    }

    #[test]
    fn push_config_limits() {
        let eps = 0.05;
        assert!(PushConfig::for_epsilon(eps, 1.0, alloc::vec![1.0]).validate(eps).is_ok());
        assert!(PushConfig::with_steps_per_gyro(eps, 8, 1.0, alloc::vec![1.0]).validate(eps).is_err());
        assert!(PushConfig::for_epsilon(eps, 1.0, alloc::vec![2.0]).validate(eps).is_err());
    }

    #[test]
    fn zero_field_keeps_delta_energies() {
        let spec = FieldSpec::new(SpatialProfile::gaussian_bump(0.0, 1.0).unwrap(), 4, 1.0, 0).unwrap();
        let cfg = PushConfig::for_epsilon(0.1, 0.5, alloc::vec![0.25, 0.5]);
        let rec = simulate_ensemble(&InitialDistribution::Delta { e0: 1.0 }, &spec, 0.1, 1, 50, &cfg, 3, 0).unwrap();
        for r in rec {
            assert!(r.energies.iter().all(|&e| (e - 1.0).abs() < 1e-13));
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let spec = FieldSpec::new(SpatialProfile::gaussian_bump(1.0, 1.0).unwrap(), 8, 1.0, 0).unwrap();
        let cfg = PushConfig::for_epsilon(0.1, 0.2, alloc::vec![0.2]);
        let init = InitialDistribution::Delta { e0: 1.0 };
        let a = simulate_ensemble(&init, &spec, 0.1, 1, 20, &cfg, 9, 2).unwrap();
        let b = simulate_ensemble(&init, &spec, 0.1, 1, 20, &cfg, 9, 2).unwrap();
        assert_eq!(a, b);
        let c = simulate_ensemble(&init, &spec, 0.1, 1, 20, &cfg, 9, 3).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn histogram_spike_and_out_of_range() {
        let h = gyro_average_histogram(&[1.05; 10], 2.0, 20).unwrap();
        assert_eq!(h.out_of_range, 0);
        assert!((h.profile.mass() - 1.0).abs() < 1e-12);
        assert_eq!(h.profile.density.iter().filter(|&&d| d > 0.0).count(), 1);
        let h = gyro_average_histogram(&[0.5, 3.0, -1.0, 1.5], 2.0, 4).unwrap();
        assert_eq!(h.out_of_range, 2);
        assert!((h.profile.mass() - 0.5).abs() < 1e-12);
        assert!(gyro_average_histogram(&[], 1.0, 4).is_err());
    }

    #[test]
    fn smooth_bump_density_is_normalized() {
        for init in [
            InitialDistribution::SmoothBump { center: 1.0, half_width: 0.5 },
            InitialDistribution::SmoothBump { center: 0.2, half_width: 0.5 },
        ] {
            let m = crate::quadrature::composite_gauss_legendre(|e| init.density(e).unwrap(), 0.0, 2.0, 400, 8);
            assert!((m - 1.0).abs() < 1e-6, "{m}");
        }
    }

    #[test]
    fn profile_median() {
        let p = EnergyProfile::from_parts(alloc::vec![0.5, 1.5, 2.5, 3.5], alloc::vec![0.25; 4]).unwrap();
        assert!((p.median() - 2.0).abs() < 1e-12);
        assert!(EnergyProfile::from_parts(alloc::vec![0.5, 1.5, 2.7], alloc::vec![0.0; 3]).is_err());
    }
}
