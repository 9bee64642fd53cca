//! Kinetic ensembles against the SHE limit along a sequence of `ε`.

use alloc::vec::Vec;

use crate::dcoeff::{coefficient_profile, DiffusionCoefficientTable, QuadratureOptions};
use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::kinetics::{
    gyro_average_histogram, simulate_ensemble, EnergyProfile, InitialDistribution, PushConfig, STEPS_PER_GYRO,
};
use crate::math::{sqrt, PI};
use crate::she::{delta_profile, sampled_profile, solve, EnergyGrid, Snapshot};

/// Distances between two densities on the same grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distances {
    pub l1: f64,
    pub l2: f64,
    pub w1: f64,
}

/// `L1 = Σ|p-q|Δe`, `L2 = (Σ(p-q)²Δe)^{1/2}`, `W1 = Σ|P-Q|Δe` with `P, Q` the
/// cumulative masses at the cell faces.
pub fn compare(p: &EnergyProfile, q: &EnergyProfile) -> Result<Distances> {
    if !p.same_grid(q) {
        return Err(Error::GridMismatch);
    }
    let de = p.de;
    let (mut l1, mut l2, mut w1) = (0.0, 0.0, 0.0);
    let (mut cp, mut cq) = (0.0, 0.0);
    for (a, b) in p.density.iter().zip(&q.density) {
        let d = a - b;
        l1 += d.abs();
        l2 += d * d;
        cp += a * de;
        cq += b * de;
        w1 += (cp - cq).abs();
    }
    Ok(Distances { l1: l1 * de, l2: sqrt(l2 * de), w1: w1 * de })
}

/// Converts the coefficient of the displayed formula to the energy diffusion of the
/// simulated characteristics, whose gyro-average carries `dθ/(2π)`.
pub const KINETIC_COEFFICIENT_SCALE: f64 = 1.0 / (2.0 * PI);

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Strictly decreasing.
    pub epsilons: Vec<f64>,
    pub n: u32,
    pub field: FieldSpec,
    pub init: InitialDistribution,
    pub particles: usize,
    pub realizations: usize,
    /// Histogram and SHE grid.
    pub grid: EnergyGrid,
    /// Increasing; the last entry is the comparison time `T`.
    pub output_times: Vec<f64>,
    pub master_seed: u64,
    pub steps_per_gyro: usize,
    pub she_dt: f64,
    /// Points of the tabulated `a(e)` on `[0, e_max]`.
    pub coefficient_points: usize,
    pub coefficient_scale: f64,
    pub quadrature: QuadratureOptions,
    /// Worker count hint; results do not depend on it.
    pub threads: Option<usize>,
    /// Enforce `2πnε ≤ T/10` for every `ε`.
    pub strict_scale_separation: bool,
}

impl ExperimentConfig {
    pub fn new(
        epsilons: Vec<f64>,
        field: FieldSpec,
        grid: EnergyGrid,
        output_times: Vec<f64>,
        particles: usize,
        realizations: usize,
        master_seed: u64,
    ) -> Self {
        ExperimentConfig {
            epsilons,
            n: 1,
            field,
            init: InitialDistribution::Delta { e0: 1.0 },
            particles,
            realizations,
            grid,
            output_times,
            master_seed,
            steps_per_gyro: STEPS_PER_GYRO,
            she_dt: 1e-3,
            coefficient_points: 121,
            coefficient_scale: KINETIC_COEFFICIENT_SCALE,
            quadrature: QuadratureOptions::default(),
            threads: None,
            strict_scale_separation: true,
        }
    }

    pub fn t_end(&self) -> f64 {
        self.output_times.last().copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::invalid("at least one epsilon is required"));
        }
        if self.epsilons.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::invalid("epsilons must be positive"));
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("epsilons must be strictly decreasing"));
        }
        if self.n == 0 {
            return Err(Error::invalid("resonance number n must be at least 1"));
        }
        if self.output_times.is_empty()
            || self.output_times.iter().any(|&t| !(t > 0.0 && t.is_finite()))
            || self.output_times.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::invalid("output times must be positive and strictly increasing"));
        }
        let t_end = self.t_end();
        if self.strict_scale_separation {
            if let Some(eps) = self.coarse_epsilons().first() {
                return Err(Error::invalid(alloc::format!("epsilon {eps} violates 2πnε ≤ T/10 with T = {t_end}")));
            }
        }
        if self.particles == 0 || self.realizations < 2 {
            return Err(Error::invalid("need at least one particle and two realizations"));
        }
        if self.steps_per_gyro < 16 {
            return Err(Error::invalid("at least 16 steps per gyro-period are required"));
        }
        if !(self.she_dt > 0.0) || self.coefficient_points < 2 || !(self.coefficient_scale > 0.0) {
            return Err(Error::invalid("SHE step, coefficient points and scale must be positive"));
        }
        if !self.field.spatial().is_synthesizable() {
            return Err(Error::UnsupportedProfile("the field must be synthesizable"));
        }
        self.init.validate()
    }

    /// The `ε` whose decorrelation time `2πnε` exceeds `T/10`.
    pub fn coarse_epsilons(&self) -> Vec<f64> {
        let t_end = self.t_end();
        self.epsilons.iter().copied().filter(|&e| 2.0 * PI * self.n as f64 * e > t_end / 10.0).collect()
    }

    /// Headline runs use at least 10⁴ particles per `ε` in total.
    pub fn meets_headline_budget(&self) -> bool {
        self.particles * self.realizations >= 10_000
    }

    fn coefficient_grid(&self) -> Vec<f64> {
        let m = self.coefficient_points - 1;
        (0..=m).map(|i| self.grid.e_max() * i as f64 / m as f64).collect()
    }
}

/// Distances at one output time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeDistance {
    pub time: f64,
    pub distances: Distances,
    pub l1_stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    /// At the final output time.
    pub distances: Distances,
    /// Jackknife standard error of the final-time `L1` over realizations.
    pub l1_stderr: f64,
    /// `Σ_k stderr_k Δe` of the realization-averaged histogram at the final time.
    pub stderr_budget: f64,
    pub out_of_range: usize,
    pub per_time: Vec<TimeDistance>,
    /// Realization-averaged density and its per-bin standard error at each output time.
    pub kinetic: Vec<(f64, EnergyProfile, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub coefficient: DiffusionCoefficientTable,
    pub reference: Vec<Snapshot>,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    /// Whether the final-time `L1` drops between consecutive `ε` by more than the
    /// combined standard error.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| {
            let margin = sqrt(w[0].l1_stderr * w[0].l1_stderr + w[1].l1_stderr * w[1].l1_stderr);
            w[0].distances.l1 - w[1].distances.l1 > margin
        })
    }
}

/// SHE reference at every output time, from the exact correlation of the field.
pub fn she_reference(cfg: &ExperimentConfig) -> Result<(DiffusionCoefficientTable, Vec<Snapshot>)> {
    let table = coefficient_profile(cfg.field.correlation(), &cfg.coefficient_grid(), cfg.n, &cfg.quadrature)?
        .scaled(cfg.coefficient_scale);
    let initial = match cfg.init {
        InitialDistribution::Delta { e0 } => delta_profile(&cfg.grid, e0)?,
        init => sampled_profile(&cfg.grid, |e| init.density(e).unwrap_or(0.0))?,
    };
    let snaps = solve(&initial, &table, cfg.t_end(), cfg.she_dt, &cfg.output_times)?;
    Ok((table, snaps))
}

/// Histograms of one realization, one per output time, plus the out-of-range count.
fn realization_histograms(cfg: &ExperimentConfig, eps: f64, r: usize) -> Result<(Vec<Vec<f64>>, usize)> {
    let push = PushConfig::with_steps_per_gyro(eps, cfg.steps_per_gyro, cfg.t_end(), cfg.output_times.clone());
    let records =
        simulate_ensemble(&cfg.init, &cfg.field, eps, cfg.n, cfg.particles, &push, cfg.master_seed, r as u64)?;
    let mut out = 0;
    let mut hists = Vec::with_capacity(records.len());
    for rec in records {
        let h = gyro_average_histogram(&rec.energies, cfg.grid.e_max(), cfg.grid.cells())?;
        out += h.out_of_range;
        hists.push(h.profile.density);
    }
    Ok((hists, out))
}

fn mean_and_stderr(samples: &[&Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let r = samples.len() as f64;
    let k = samples[0].len();
    let mut mean = alloc::vec![0.0; k];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s.iter()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= r);
    let mut var = alloc::vec![0.0; k];
    for s in samples {
        for ((v, m), x) in var.iter_mut().zip(&mean).zip(s.iter()) {
            *v += (x - m) * (x - m);
        }
    }
    let se = var.iter().map(|v| sqrt(v / (r - 1.0) / r)).collect();
    (mean, se)
}

fn l1(p: &[f64], q: &[f64], de: f64) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() * de
}

/// Jackknife standard error of `L1(mean of samples, reference)`.
fn jackknife_l1(samples: &[&Vec<f64>], reference: &[f64], de: f64) -> f64 {
    let r = samples.len();
    let k = reference.len();
    let mut total = alloc::vec![0.0; k];
    for s in samples {
        for (t, x) in total.iter_mut().zip(s.iter()) {
            *t += x;
        }
    }
    let mut leave: Vec<f64> = Vec::with_capacity(r);
    let mut buf = alloc::vec![0.0; k];
    for s in samples {
        for ((b, t), x) in buf.iter_mut().zip(&total).zip(s.iter()) {
            *b = (t - x) / (r - 1) as f64;
        }
        leave.push(l1(&buf, reference, de));
    }
    let mean = leave.iter().sum::<f64>() / r as f64;
    let ss = leave.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    sqrt((r - 1) as f64 / r as f64 * ss)
}

/// Runs one `ε` row against a precomputed SHE reference.
pub fn run_epsilon(cfg: &ExperimentConfig, eps: f64, reference: &[Snapshot]) -> Result<ConvergenceRow> {
    let job = |r: usize| realization_histograms(cfg, eps, r);
    #[cfg(feature = "parallel")]
    let results: Vec<Result<(Vec<Vec<f64>>, usize)>> = {
        use rayon::prelude::*;
        (0..cfg.realizations).into_par_iter().map(job).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(Vec<Vec<f64>>, usize)>> = (0..cfg.realizations).map(job).collect();
    // results are in realization order whatever the scheduling
    let mut per_real = Vec::with_capacity(results.len());
    let mut out_of_range = 0;
    for res in results {
        let (h, o) = res?;
        out_of_range += o;
        per_real.push(h);
    }
    let de = cfg.grid.de();
    let mut per_time = Vec::with_capacity(cfg.output_times.len());
    let mut kinetic = Vec::with_capacity(cfg.output_times.len());
    let mut budget = 0.0;
    for (ti, snap) in reference.iter().enumerate() {
        let samples: Vec<&Vec<f64>> = per_real.iter().map(|h| &h[ti]).collect();
        let (mean, se) = mean_and_stderr(&samples);
        let profile = cfg.grid.profile(mean)?;
        let distances = compare(&profile, &snap.profile)?;
        let l1_stderr = jackknife_l1(&samples, &snap.profile.density, de);
        budget = se.iter().sum::<f64>() * de;
        per_time.push(TimeDistance { time: snap.time, distances, l1_stderr });
        kinetic.push((snap.time, profile, se));
    }
    let last = *per_time.last().ok_or_else(|| Error::invalid("no output times"))?;
    Ok(ConvergenceRow {
        epsilon: eps,
        distances: last.distances,
        l1_stderr: last.l1_stderr,
        stderr_budget: budget,
        out_of_range,
        per_time,
        kinetic,
    })
}

/// Full study; `on_row` sees each finished row before the next `ε` starts.
pub fn run_convergence_study_with<F>(cfg: &ExperimentConfig, mut on_row: F) -> Result<ConvergenceReport>
where
    F: FnMut(&ConvergenceRow, &[Snapshot]),
{
    cfg.validate()?;
    let (coefficient, reference) = she_reference(cfg)?;
    let mut rows = Vec::with_capacity(cfg.epsilons.len());
    for &eps in &cfg.epsilons {
        let row = run_epsilon(cfg, eps, &reference)?;
        on_row(&row, &reference);
        rows.push(row);
    }
    Ok(ConvergenceReport { coefficient, reference, rows })
}

pub fn run_convergence_study(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    run_convergence_study_with(cfg, |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::SpatialProfile;

    fn profile(d: Vec<f64>, de: f64) -> EnergyProfile {
        let c = (0..d.len()).map(|k| (k as f64 + 0.5) * de).collect();
        EnergyProfile { e_centers: c, density: d, de }
    }

    #[test]
    fn identical_profiles_have_zero_distance() {
        let p = profile(alloc::vec![0.1, 0.5, 0.4], 1.0);
        assert_eq!(compare(&p, &p).unwrap(), Distances { l1: 0.0, l2: 0.0, w1: 0.0 });
    }

    #[test]
    fn adjacent_point_masses() {
        let de = 0.25;
        let mut a = alloc::vec![0.0; 8];
        let mut b = alloc::vec![0.0; 8];
        a[3] = 1.0 / de;
        b[4] = 1.0 / de;
        let d = compare(&profile(a, de), &profile(b, de)).unwrap();
        assert!((d.w1 - de).abs() < 1e-15);
        assert!((d.l1 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn grid_mismatch_is_fatal() {
        let p = profile(alloc::vec![1.0; 4], 0.25);
        let q = profile(alloc::vec![1.0; 5], 0.25);
        assert!(matches!(compare(&p, &q), Err(Error::GridMismatch)));
    }

    fn small_config(sigma2: f64) -> ExperimentConfig {
        let field = FieldSpec::new(SpatialProfile::gaussian_bump(sigma2, 1.0).unwrap(), 16, 1.0, 0).unwrap();
        let mut cfg = ExperimentConfig::new(
            alloc::vec![0.01],
            field,
            EnergyGrid::new(3.0, 30).unwrap(),
            alloc::vec![0.5, 1.0],
            20,
            2,
            5,
        );
        cfg.steps_per_gyro = 16;
        cfg.coefficient_points = 7;
        cfg
    }

    #[test]
    fn validation_rules() {
        let mut cfg = small_config(1.0);
        assert!(cfg.validate().is_ok());
        cfg.epsilons = alloc::vec![0.01, 0.01];
        assert!(cfg.validate().is_err());
        cfg.epsilons = alloc::vec![0.1];
        // 2π·0.1 > 1/10
        assert!(cfg.validate().is_err());
        cfg.strict_scale_separation = false;
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.coarse_epsilons(), alloc::vec![0.1]);
        assert!(!small_config(1.0).meets_headline_budget());
    }

    #[test]
    fn zero_field_reference_is_constant() {
        let cfg = small_config(0.0);
        let (table, snaps) = she_reference(&cfg).unwrap();
        assert!(table.a_values().iter().all(|&a| a == 0.0));
        assert_eq!(snaps[0].profile, snaps[1].profile);
    }

    #[test]
    fn repeated_study_is_identical() {
        let cfg = small_config(1.0);
        let a = run_convergence_study(&cfg).unwrap();
        let b = run_convergence_study(&cfg).unwrap();
        assert_eq!(a, b);
    }
}
