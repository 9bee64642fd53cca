//! Stationary random potentials with exactly finite temporal correlation.
//!
//! The field is a renewal sequence of independent random-Fourier spatial fields,
//! each switched on and off by a compactly supported window:
//!
//! `V(τ, x) = Σ_j c(τ - jL - δ) U_j(x)`,  `U_j(x) = σ √(2/M) Σ_m cos(k_m · x + φ_m)`.
//!
//! With `δ` uniform on `[0, L)` the covariance is `ρ_c(τ - σ) C(x - y)` exactly, for
//! any mode count, and values at lags `|τ - σ| >= L` are uncorrelated.

use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::correlation::{CorrelationModel, EnvelopeShape, SpatialProfile, SpectralSampler, TemporalEnvelope};
use crate::error::{Error, Result};
use crate::math::{cos, floor, powi, sin, sqrt, Vec2, PI};
use crate::rng::{derive_seed, derive_seed_signed, stage_rng, Stage, StageRng};

use rand::SeedableRng;

/// Blocks generated eagerly by [`synthesize`] on each side of `τ = 0`.
pub const DEFAULT_BLOCK_HORIZON: i64 = 8;
pub const DEFAULT_MODE_COUNT: usize = 64;
pub const DEFAULT_WINDOW_POWER: u32 = 2;

/// Recipe for a family of field realizations.
#[derive(Clone, Debug)]
pub struct FieldSpec {
    correlation: CorrelationModel,
    mode_count: usize,
    window_power: u32,
    block_length: f64,
    master_seed: u64,
}

impl FieldSpec {
    /// Field with spatial covariance `spatial` and the default `sin²` window over one block.
    pub fn new(spatial: SpatialProfile, mode_count: usize, block_length: f64, master_seed: u64) -> Result<Self> {
        Self::with_window(spatial, DEFAULT_WINDOW_POWER, mode_count, block_length, master_seed)
    }

    pub fn with_window(
        spatial: SpatialProfile,
        window_power: u32,
        mode_count: usize,
        block_length: f64,
        master_seed: u64,
    ) -> Result<Self> {
        if !spatial.is_synthesizable() {
            return Err(Error::UnsupportedProfile(match spatial {
                SpatialProfile::PowerLaw { .. } => "power-law profiles are not covariances",
                _ => "custom profile without a spectral sampler",
            }));
        }
        if mode_count == 0 {
            return Err(Error::invalid("mode count must be at least 1"));
        }
        if !(block_length > 0.0) {
            return Err(Error::invalid("block length must be positive"));
        }
        let temporal = TemporalEnvelope::window_autocorrelation(window_power, block_length, 1.0)?;
        Ok(FieldSpec {
            correlation: CorrelationModel::separable(temporal, spatial),
            mode_count,
            window_power,
            block_length,
            master_seed,
        })
    }

    /// Field realizing a separable model whose temporal envelope is a window autocorrelation.
    pub fn from_correlation(model: &CorrelationModel, mode_count: usize, master_seed: u64) -> Result<Self> {
        let (Some(temporal), Some(spatial)) = (model.temporal(), model.spatial()) else {
            return Err(Error::UnsupportedProfile("only separable correlations can be synthesized"));
        };
        let EnvelopeShape::WindowAutocorrelation { power, width, .. } = temporal.shape() else {
            return Err(Error::invalid(
                "the temporal envelope of a synthesized field must be a window autocorrelation",
            ));
        };
        if (temporal.amplitude() - 1.0).abs() > 1e-15 {
            return Err(Error::invalid("window envelope amplitude must be 1; put the variance in the spatial profile"));
        }
        Self::with_window(spatial.clone(), *power, mode_count, *width, master_seed)
    }

    /// The correlation `A(t, x) = ρ_c(t) C(x)` this field realizes.
    pub fn correlation(&self) -> &CorrelationModel {
        &self.correlation
    }

    pub fn spatial(&self) -> &SpatialProfile {
        self.correlation.spatial().expect("field correlations are separable")
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn block_length(&self) -> f64 {
        self.block_length
    }

    pub fn window_power(&self) -> u32 {
        self.window_power
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn with_master_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_mode_count(mut self, mode_count: usize) -> Self {
        self.mode_count = mode_count.max(1);
        self
    }

    /// Target covariance `E[V(τ₀ + τ, x₀ + x) V(τ₀, x₀)]`.
    pub fn target_covariance(&self, tau: f64, x: Vec2) -> f64 {
        self.correlation.value(tau, x)
    }

    fn window_scale(&self) -> f64 {
        // (1/L) ∫ c² = ρ_c(0) = 1
        let mean = (1..=self.window_power).fold(1.0, |acc, k| acc * (2 * k - 1) as f64 / (2 * k) as f64);
        1.0 / sqrt(mean)
    }

    fn sampler(&self) -> SpectralSampler {
        match self.spatial() {
            SpatialProfile::GaussianBump { length, .. } => {
                let inv = 1.0 / *length;
                Arc::new(move |rng: &mut dyn rand::RngCore| {
                    let kx: f64 = rng.sample(StandardNormal);
                    let ky: f64 = rng.sample(StandardNormal);
                    Vec2::new(inv * kx, inv * ky)
                })
            }
            SpatialProfile::Custom { spectrum: Some(s), .. } => s.clone(),
            _ => unreachable!("checked at construction"),
        }
    }
}

/// Mode table of one renewal block.
#[derive(Clone, Debug)]
struct Block {
    kx: Vec<f64>,
    ky: Vec<f64>,
    phase: Vec<f64>,
}

/// One sample of the random potential.
#[derive(Clone)]
pub struct FieldRealization {
    block_length: f64,
    window_power: i32,
    window_scale: f64,
    mode_amplitude: f64,
    mode_count: usize,
    delta: f64,
    seed: u64,
    first_block: i64,
    blocks: Vec<Block>,
    sampler: SpectralSampler,
}

impl core::fmt::Debug for FieldRealization {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("FieldRealization")
            .field("seed", &self.seed)
            .field("delta", &self.delta)
            .field("first_block", &self.first_block)
            .field("blocks", &self.blocks.len())
            .finish()
    }
}

/// Synthesizes realization `realization_index` with blocks covering `τ ∈ [-8L, 8L]`;
/// blocks outside the window are generated on demand with identical values.
pub fn synthesize(spec: &FieldSpec, realization_index: u64) -> FieldRealization {
    let l = spec.block_length;
    synthesize_window(spec, realization_index, -(DEFAULT_BLOCK_HORIZON as f64) * l, DEFAULT_BLOCK_HORIZON as f64 * l)
}

/// Synthesizes a realization with its mode tables pre-generated for `τ ∈ [tau_min, tau_max]`.
pub fn synthesize_window(spec: &FieldSpec, realization_index: u64, tau_min: f64, tau_max: f64) -> FieldRealization {
    let seed = derive_seed(spec.master_seed, Stage::FieldRealization, realization_index);
    let mut rng = StageRng::seed_from_u64(seed);
    let l = spec.block_length;
    let delta = l * rng.gen::<f64>();
    let sigma = sqrt(spec.spatial().variance().max(0.0));
    let mut real = FieldRealization {
        block_length: l,
        window_power: spec.window_power as i32,
        window_scale: spec.window_scale(),
        mode_amplitude: sigma * sqrt(2.0 / spec.mode_count as f64),
        mode_count: spec.mode_count,
        delta,
        seed,
        first_block: 0,
        blocks: Vec::new(),
        sampler: spec.sampler(),
    };
    let (lo, hi) = if tau_min <= tau_max { (tau_min, tau_max) } else { (tau_max, tau_min) };
    let j0 = real.block_index(lo);
    let j1 = real.block_index(hi);
    real.first_block = j0;
    real.blocks = (j0..=j1).map(|j| real.make_block(j)).collect();
    real
}

impl FieldRealization {
    #[inline]
    fn block_index(&self, tau: f64) -> i64 {
        floor((tau - self.delta) / self.block_length) as i64
    }

    fn make_block(&self, j: i64) -> Block {
        let mut rng = StageRng::seed_from_u64(derive_seed_signed(self.seed, Stage::FieldBlock, j));
        let m = self.mode_count;
        let mut block = Block { kx: Vec::with_capacity(m), ky: Vec::with_capacity(m), phase: Vec::with_capacity(m) };
        for _ in 0..m {
            let k = (self.sampler)(&mut rng);
            block.kx.push(k.x);
            block.ky.push(k.y);
            block.phase.push(2.0 * PI * rng.gen::<f64>());
        }
        block
    }

    /// Random time shift of the renewal sequence.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Window value `c(u)` at local time `u ∈ [0, L)`.
    #[inline]
    fn window(&self, u: f64) -> f64 {
        self.window_scale * powi(sin(PI * u / self.block_length), self.window_power)
    }

    #[inline]
    fn locate(&self, tau: f64) -> (i64, f64) {
        let j = self.block_index(tau);
        let u = tau - self.delta - j as f64 * self.block_length;
        (j, u.clamp(0.0, self.block_length))
    }

    #[inline]
    fn with_block<R>(&self, j: i64, f: impl FnOnce(&Block) -> R) -> R {
        let idx = j - self.first_block;
        if idx >= 0 && (idx as usize) < self.blocks.len() {
            f(&self.blocks[idx as usize])
        } else {
            f(&self.make_block(j))
        }
    }

    /// `V(τ, x)`.
    pub fn evaluate_potential(&self, tau: f64, x: Vec2) -> f64 {
        let (j, u) = self.locate(tau);
        let env = self.window(u);
        if env == 0.0 || self.mode_amplitude == 0.0 {
            return 0.0;
        }
        let sum = self.with_block(j, |b| {
            let mut s = 0.0;
            for m in 0..b.phase.len() {
                s += cos(b.kx[m] * x.x + b.ky[m] * x.y + b.phase[m]);
            }
            s
        });
        env * self.mode_amplitude * sum
    }

    /// `∇_x V(τ, x)`, analytic.
    pub fn evaluate_gradient(&self, tau: f64, x: Vec2) -> Vec2 {
        let (j, u) = self.locate(tau);
        let env = self.window(u);
        if env == 0.0 || self.mode_amplitude == 0.0 {
            return Vec2::ZERO;
        }
        let (gx, gy) = self.with_block(j, |b| {
            let (mut gx, mut gy) = (0.0, 0.0);
            for m in 0..b.phase.len() {
                let s = sin(b.kx[m] * x.x + b.ky[m] * x.y + b.phase[m]);
                gx += s * b.kx[m];
                gy += s * b.ky[m];
            }
            (gx, gy)
        });
        let scale = -env * self.mode_amplitude;
        Vec2::new(scale * gx, scale * gy)
    }
}

/// One row of an empirical correlation table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEstimate {
    pub tau: f64,
    pub x: Vec2,
    pub target: f64,
    pub estimate: f64,
    pub stderr: f64,
}

/// Base points drawn per realization by [`empirical_correlation`].
pub const BASE_POINTS_PER_REALIZATION: usize = 32;

/// Monte Carlo estimate of `E[V(τ₀ + τ, x₀ + x) V(τ₀, x₀)]` over random base points.
///
/// Each realization contributes the mean over its base points; the standard error
/// is taken across realizations, which are independent.
pub fn empirical_correlation(
    spec: &FieldSpec,
    lags: &[(f64, Vec2)],
    n_realizations: usize,
) -> Result<Vec<CorrelationEstimate>> {
    if n_realizations < 100 {
        return Err(Error::invalid("empirical correlation needs at least 100 realizations"));
    }
    let l = spec.block_length;
    let span = 16.0 * spec.spatial().length_scale();
    let tau_max = lags.iter().fold(0.0f64, |m, (t, _)| m.max(t.abs()));

    let per_realization = |r: usize| -> Vec<f64> {
        let real = synthesize_window(spec, r as u64, -tau_max - l, 8.0 * l + tau_max + l);
        let mut rng = stage_rng(spec.master_seed, Stage::Sampling, r as u64);
        let mut acc = alloc::vec![0.0; lags.len()];
        for _ in 0..BASE_POINTS_PER_REALIZATION {
            let t0 = 8.0 * l * rng.gen::<f64>();
            let x0 = Vec2::new(span * rng.gen::<f64>(), span * rng.gen::<f64>());
            let v0 = real.evaluate_potential(t0, x0);
            for (a, (tau, x)) in acc.iter_mut().zip(lags) {
                *a += real.evaluate_potential(t0 + tau, x0 + *x) * v0;
            }
        }
        acc.iter_mut().for_each(|a| *a /= BASE_POINTS_PER_REALIZATION as f64);
        acc
    };

    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..n_realizations).into_par_iter().map(per_realization).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f64>> = (0..n_realizations).map(per_realization).collect();

    let nr = n_realizations as f64;
    Ok(lags
        .iter()
        .enumerate()
        .map(|(i, (tau, x))| {
            let mean = rows.iter().map(|r| r[i]).sum::<f64>() / nr;
            let var = rows.iter().map(|r| (r[i] - mean) * (r[i] - mean)).sum::<f64>() / (nr - 1.0);
            CorrelationEstimate {
                tau: *tau,
                x: *x,
                target: spec.target_covariance(*tau, *x),
                estimate: mean,
                stderr: sqrt(var / nr),
            }
        })
        .collect())
}

/// Mean of `V` over the same base points as [`empirical_correlation`], with its
/// standard error across realizations.
pub fn empirical_mean(spec: &FieldSpec, n_realizations: usize) -> Result<(f64, f64)> {
    if n_realizations < 100 {
        return Err(Error::invalid("empirical mean needs at least 100 realizations"));
    }
    let l = spec.block_length;
    let span = 16.0 * spec.spatial().length_scale();
    let per_realization = |r: usize| -> f64 {
        let real = synthesize_window(spec, r as u64, -l, 9.0 * l);
        let mut rng = stage_rng(spec.master_seed, Stage::Sampling, r as u64);
        let mut acc = 0.0;
        for _ in 0..BASE_POINTS_PER_REALIZATION {
            let t0 = 8.0 * l * rng.gen::<f64>();
            let x0 = Vec2::new(span * rng.gen::<f64>(), span * rng.gen::<f64>());
            acc += real.evaluate_potential(t0, x0);
        }
        acc / BASE_POINTS_PER_REALIZATION as f64
    };
    #[cfg(feature = "parallel")]
    let means: Vec<f64> = {
        use rayon::prelude::*;
        (0..n_realizations).into_par_iter().map(per_realization).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let means: Vec<f64> = (0..n_realizations).map(per_realization).collect();
    let nr = n_realizations as f64;
    let mean = means.iter().sum::<f64>() / nr;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (nr - 1.0);
    Ok((mean, sqrt(var / nr)))
}
