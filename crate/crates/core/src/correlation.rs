//! Space-time correlation `A(t, x)` of the turbulent potential.
//!
//! A model is either separable, `A(t, x) = f(t) g(|x|)`, or an arbitrary even
//! callable. The temporal lag `t` is measured in decorrelation units of the
//! unscaled field, so `A(t, ·) = 0` for `|t| >= t_support`.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::math::{cos, powf, powi, sin, sqrt, Vec2, PI};
use crate::quadrature::{composite_with_rule, gauss_legendre, periodic_mean};
use crate::rng::{stage_rng, Stage};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(f64, Vec2) -> f64 + Send + Sync>;
/// Draws a wave-vector from the normalized spectral density of a spatial covariance.
pub type SpectralSampler = Arc<dyn Fn(&mut dyn RngCore) -> Vec2 + Send + Sync>;

/// Shape of the temporal correlation `f`.
#[derive(Clone)]
pub enum EnvelopeShape {
    /// `cos^p(π t / (2 T))` on `|t| < T`, zero outside.
    RaisedCosine { power: u32, half_width: f64 },
    /// Autocorrelation `∫ c(u) c(u + t) du` of the window `c(u) = sin^p(π u / w)` on `[0, w]`.
    /// Positive definite by construction; support `[-w, w]`.
    WindowAutocorrelation { power: u32, width: f64, nodes: Arc<[f64]>, weights: Arc<[f64]> },
    /// User supplied even function with support radius `support`.
    Custom { f: ScalarFn, d2: Option<ScalarFn>, support: f64 },
}

/// Temporal envelope `f(t)`, scaled so that `f(0) = amplitude` for the built-in shapes.
#[derive(Clone)]
pub struct TemporalEnvelope {
    shape: EnvelopeShape,
    amplitude: f64,
}

// ∫_0^1 sin^{2p}(πu) du = (2p-1)!! / (2p)!!
fn sin_power_mean(power: u32) -> f64 {
    (1..=power).fold(1.0, |acc, k| acc * (2 * k - 1) as f64 / (2 * k) as f64)
}

impl TemporalEnvelope {
    pub fn raised_cosine(power: u32, half_width: f64, amplitude: f64) -> Result<Self> {
        if power < 2 {
            return Err(Error::invalid("raised-cosine power must be >= 2 so that f'(0) = 0 and f'' is bounded"));
        }
        if !(half_width > 0.0) {
            return Err(Error::invalid("envelope support must be positive"));
        }
        Ok(TemporalEnvelope { shape: EnvelopeShape::RaisedCosine { power, half_width }, amplitude })
    }

    pub fn window_autocorrelation(power: u32, width: f64, amplitude: f64) -> Result<Self> {
        if power < 2 {
            return Err(Error::invalid("window power must be >= 2"));
        }
        if !(width > 0.0) {
            return Err(Error::invalid("window width must be positive"));
        }
        let (n, w) = gauss_legendre(64);
        Ok(TemporalEnvelope {
            shape: EnvelopeShape::WindowAutocorrelation { power, width, nodes: n.into(), weights: w.into() },
            amplitude,
        })
    }

    pub fn custom(f: ScalarFn, d2: Option<ScalarFn>, support: f64) -> Self {
        TemporalEnvelope { shape: EnvelopeShape::Custom { f, d2, support }, amplitude: 1.0 }
    }

    pub fn zero(support: f64) -> Self {
        TemporalEnvelope::custom(Arc::new(|_| 0.0), Some(Arc::new(|_| 0.0)), support)
    }

    pub fn shape(&self) -> &EnvelopeShape {
        &self.shape
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn support(&self) -> f64 {
        match &self.shape {
            EnvelopeShape::RaisedCosine { half_width, .. } => *half_width,
            EnvelopeShape::WindowAutocorrelation { width, .. } => *width,
            EnvelopeShape::Custom { support, .. } => *support,
        }
    }

    pub fn has_analytic_second_derivative(&self) -> bool {
        !matches!(&self.shape, EnvelopeShape::Custom { d2: None, .. })
    }

    pub fn value(&self, t: f64) -> f64 {
        let t = t.abs();
        match &self.shape {
            EnvelopeShape::RaisedCosine { power, half_width } => {
                if t >= *half_width {
                    0.0
                } else {
                    self.amplitude * powi(cos(0.5 * PI * t / half_width), *power as i32)
                }
            }
            EnvelopeShape::WindowAutocorrelation { power, width, nodes, weights } => {
                if t >= *width {
                    return 0.0;
                }
                let u = t / width;
                let ratio = if *power == 2 {
                    (2.0 / 3.0) * ((1.0 - u) * (1.0 + 0.5 * cos(2.0 * PI * u)) + 3.0 * sin(2.0 * PI * u) / (4.0 * PI))
                } else {
                    let p = *power as i32;
                    let c = |x: f64| powi(sin(PI * x), p) * powi(sin(PI * (x + u)), p);
                    composite_with_rule(&c, 0.0, 1.0 - u, 1, nodes, weights) / sin_power_mean(*power)
                };
                self.amplitude * ratio
            }
            EnvelopeShape::Custom { f, .. } => f(t),
        }
    }

    /// Second derivative; analytic for the built-in shapes, `None` for a custom
    /// envelope without one.
    pub fn analytic_second_derivative(&self, t: f64) -> Option<f64> {
        let t = t.abs();
        Some(match &self.shape {
            EnvelopeShape::RaisedCosine { power, half_width } => {
                if t >= *half_width {
                    0.0
                } else {
                    // d²/dt² cos^p(ωt) = p ω² cos^{p-2}(ωt) [(p-1) sin²(ωt) - cos²(ωt)]
                    let w = 0.5 * PI / half_width;
                    let (s, c) = (sin(w * t), cos(w * t));
                    let p = *power as f64;
                    self.amplitude * p * w * w * powi(c, *power as i32 - 2) * ((p - 1.0) * s * s - c * c)
                }
            }
            EnvelopeShape::WindowAutocorrelation { power, width, nodes, weights } => {
                if t >= *width {
                    return Some(0.0);
                }
                let u = t / width;
                let ratio = if *power == 2 {
                    (2.0 / 3.0) * (-PI * sin(2.0 * PI * u) - 2.0 * PI * PI * (1.0 - u) * cos(2.0 * PI * u))
                } else {
                    // R''(u) = -∫ c'(x) c'(x + u) dx, the boundary terms vanish for p >= 2
                    let p = *power as i32;
                    let dc = |x: f64| *power as f64 * PI * powi(sin(PI * x), p - 1) * cos(PI * x);
                    let g = |x: f64| dc(x) * dc(x + u);
                    -composite_with_rule(&g, 0.0, 1.0 - u, 1, nodes, weights) / sin_power_mean(*power)
                };
                self.amplitude * ratio / (width * width)
            }
            EnvelopeShape::Custom { d2, .. } => return d2.as_ref().map(|d| d(t)),
        })
    }
}

impl fmt::Debug for TemporalEnvelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.shape {
            EnvelopeShape::RaisedCosine { power, half_width } => f
                .debug_struct("RaisedCosine")
                .field("power", power)
                .field("half_width", half_width)
                .field("amplitude", &self.amplitude)
                .finish(),
            EnvelopeShape::WindowAutocorrelation { power, width, .. } => f
                .debug_struct("WindowAutocorrelation")
                .field("power", power)
                .field("width", width)
                .field("amplitude", &self.amplitude)
                .finish(),
            EnvelopeShape::Custom { support, d2, .. } => {
                f.debug_struct("Custom").field("support", support).field("analytic_d2", &d2.is_some()).finish()
            }
        }
    }
}

/// Radial spatial profile `g(r)`.
#[derive(Clone)]
pub enum SpatialProfile {
    /// `r^α`. Unbounded, so only usable in quadrature and closed-form computations.
    PowerLaw {
        alpha: f64,
    },
    /// `σ² exp(-r² / (2ℓ²))`.
    GaussianBump {
        variance: f64,
        length: f64,
    },
    Custom {
        g: ScalarFn,
        spectrum: Option<SpectralSampler>,
    },
}

impl SpatialProfile {
    pub fn power_law(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::invalid("power-law exponent must lie in (0, 2]"));
        }
        Ok(SpatialProfile::PowerLaw { alpha })
    }

    pub fn gaussian_bump(variance: f64, length: f64) -> Result<Self> {
        if !(variance >= 0.0) || !(length > 0.0) {
            return Err(Error::invalid("Gaussian bump needs variance >= 0 and length > 0"));
        }
        Ok(SpatialProfile::GaussianBump { variance, length })
    }

    pub fn value(&self, r: f64) -> f64 {
        match self {
            SpatialProfile::PowerLaw { alpha } => powf(r, *alpha),
            SpatialProfile::GaussianBump { variance, length } => {
                variance * crate::math::exp(-r * r / (2.0 * length * length))
            }
            SpatialProfile::Custom { g, .. } => g(r),
        }
    }

    /// `(g'(r), g''(r))`; finite differences for custom profiles.
    pub fn radial_derivatives(&self, r: f64) -> (f64, f64) {
        match self {
            SpatialProfile::PowerLaw { alpha } => {
                if r == 0.0 {
                    return (0.0, 0.0);
                }
                let a = *alpha;
                (a * powf(r, a - 1.0), a * (a - 1.0) * powf(r, a - 2.0))
            }
            SpatialProfile::GaussianBump { length, .. } => {
                let l2 = length * length;
                let g = self.value(r);
                (-r / l2 * g, (r * r / (l2 * l2) - 1.0 / l2) * g)
            }
            SpatialProfile::Custom { g, .. } => {
                let h = 1e-4 * (1.0 + r);
                let (gp, g0, gm) = (g(r + h), g(r), g((r - h).abs()));
                ((gp - gm) / (2.0 * h), (gp - 2.0 * g0 + gm) / (h * h))
            }
        }
    }

    /// Characteristic length used for sampling in validation.
    pub fn length_scale(&self) -> f64 {
        match self {
            SpatialProfile::GaussianBump { length, .. } => *length,
            _ => 1.0,
        }
    }

    /// Variance `g(0)` of a bounded profile.
    pub fn variance(&self) -> f64 {
        self.value(0.0)
    }

    pub fn is_synthesizable(&self) -> bool {
        match self {
            SpatialProfile::PowerLaw { .. } => false,
            SpatialProfile::GaussianBump { .. } => true,
            SpatialProfile::Custom { spectrum, .. } => spectrum.is_some(),
        }
    }
}

impl fmt::Debug for SpatialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpatialProfile::PowerLaw { alpha } => f.debug_struct("PowerLaw").field("alpha", alpha).finish(),
            SpatialProfile::GaussianBump { variance, length } => {
                f.debug_struct("GaussianBump").field("variance", variance).field("length", length).finish()
            }
            SpatialProfile::Custom { spectrum, .. } => {
                f.debug_struct("Custom").field("spectrum", &spectrum.is_some()).finish()
            }
        }
    }
}

#[derive(Clone)]
pub enum CorrelationKind {
    Separable { temporal: TemporalEnvelope, spatial: SpatialProfile },
    General(SpaceTimeFn),
}

/// The correlation function `A(t, x)` together with its admissibility metadata.
#[derive(Clone)]
pub struct CorrelationModel {
    kind: CorrelationKind,
    t_support: f64,
    d2tt: Option<SpaceTimeFn>,
    fd_step: f64,
}

impl fmt::Debug for CorrelationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("CorrelationModel");
        match &self.kind {
            CorrelationKind::Separable { temporal, spatial } => {
                d.field("temporal", temporal).field("spatial", spatial);
            }
            CorrelationKind::General(_) => {
                d.field("kind", &"General");
            }
        }
        d.field("t_support", &self.t_support)
            .field("analytic_d2tt", &self.d2tt.is_some())
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

const DEFAULT_FD_FRACTION: f64 = 1e-4;

impl CorrelationModel {
    pub fn separable(temporal: TemporalEnvelope, spatial: SpatialProfile) -> Self {
        let t_support = temporal.support();
        CorrelationModel {
            kind: CorrelationKind::Separable { temporal, spatial },
            t_support,
            d2tt: None,
            fd_step: DEFAULT_FD_FRACTION * t_support,
        }
    }

    /// A black-box correlation. `a` is not truncated: the support claim is
    /// checked by [`validate`].
    pub fn general(a: SpaceTimeFn, t_support: f64) -> Result<Self> {
        if !(t_support > 0.0) {
            return Err(Error::invalid("t_support must be positive"));
        }
        Ok(CorrelationModel {
            kind: CorrelationKind::General(a),
            t_support,
            d2tt: None,
            fd_step: DEFAULT_FD_FRACTION * t_support,
        })
    }

    /// The identically zero correlation.
    pub fn zero(t_support: f64) -> Self {
        CorrelationModel::separable(
            TemporalEnvelope::zero(t_support),
            SpatialProfile::GaussianBump { variance: 0.0, length: 1.0 },
        )
    }

    pub fn with_d2tt(mut self, d2tt: SpaceTimeFn) -> Self {
        self.d2tt = Some(d2tt);
        self
    }

    pub fn with_fd_step(mut self, step: f64) -> Self {
        self.fd_step = step;
        self
    }

    pub fn kind(&self) -> &CorrelationKind {
        &self.kind
    }

    pub fn t_support(&self) -> f64 {
        self.t_support
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn temporal(&self) -> Option<&TemporalEnvelope> {
        match &self.kind {
            CorrelationKind::Separable { temporal, .. } => Some(temporal),
            CorrelationKind::General(_) => None,
        }
    }

    pub fn spatial(&self) -> Option<&SpatialProfile> {
        match &self.kind {
            CorrelationKind::Separable { spatial, .. } => Some(spatial),
            CorrelationKind::General(_) => None,
        }
    }

    /// True when `A(t, R x) = A(t, x)` for every rotation `R`.
    pub fn is_radial(&self) -> bool {
        matches!(self.kind, CorrelationKind::Separable { .. })
    }

    pub fn value(&self, t: f64, x: Vec2) -> f64 {
        match &self.kind {
            CorrelationKind::Separable { temporal, spatial } => temporal.value(t) * spatial.value(x.norm()),
            CorrelationKind::General(a) => a(t, x),
        }
    }

    fn check_fd_step(&self) -> Result<()> {
        if !(self.fd_step > 0.0) {
            return Err(Error::invalid("fd_step must be positive"));
        }
        Ok(())
    }

    /// `∂²A/∂t²`: the analytic form when one is available, otherwise a central
    /// difference with one Richardson level.
    pub fn d2tt(&self, t: f64, x: Vec2) -> Result<f64> {
        if let Some(d) = &self.d2tt {
            return Ok(d(t, x));
        }
        if let CorrelationKind::Separable { temporal, spatial } = &self.kind {
            if let Some(fpp) = temporal.analytic_second_derivative(t) {
                return Ok(fpp * spatial.value(x.norm()));
            }
            self.check_fd_step()?;
            let fpp = richardson_second_difference(|s| temporal.value(s), t, self.fd_step);
            return Ok(fpp * spatial.value(x.norm()));
        }
        self.check_fd_step()?;
        Ok(richardson_second_difference(|s| self.value(s, x), t, self.fd_step))
    }

    /// Spatial Hessian `∇²_x A(t, x)`, row-major.
    pub fn hessian_x(&self, t: f64, x: Vec2) -> [[f64; 2]; 2] {
        match &self.kind {
            CorrelationKind::Separable { temporal, spatial } => {
                let f = temporal.value(t);
                let r = x.norm();
                let (g1, g2) = spatial.radial_derivatives(r);
                if r == 0.0 {
                    return [[f * g2, 0.0], [0.0, f * g2]];
                }
                let (ux, uy) = (x.x / r, x.y / r);
                let tang = g1 / r;
                [
                    [f * (g2 * ux * ux + tang * (1.0 - ux * ux)), f * (g2 - tang) * ux * uy],
                    [f * (g2 - tang) * ux * uy, f * (g2 * uy * uy + tang * (1.0 - uy * uy))],
                ]
            }
            CorrelationKind::General(a) => {
                let h = 1e-4;
                let e1 = Vec2::new(h, 0.0);
                let e2 = Vec2::new(0.0, h);
                let a0 = a(t, x);
                let dxx = (a(t, x + e1) - 2.0 * a0 + a(t, x - e1)) / (h * h);
                let dyy = (a(t, x + e2) - 2.0 * a0 + a(t, x - e2)) / (h * h);
                let dxy =
                    (a(t, x + e1 + e2) - a(t, x + e1 - e2) - a(t, x - e1 + e2) + a(t, x - e1 - e2)) / (4.0 * h * h);
                [[dxx, dxy], [dxy, dyy]]
            }
        }
    }
}

fn richardson_second_difference<F: Fn(f64) -> f64>(f: F, t: f64, h: f64) -> f64 {
    let f0 = f(t);
    let coarse = (f(t + h) - 2.0 * f0 + f(t - h)) / (h * h);
    let hh = 0.5 * h;
    let fine = (f(t + hh) - 2.0 * f0 + f(t - hh)) / (hh * hh);
    (4.0 * fine - coarse) / 3.0
}

fn check_n_theta(n_theta: usize) -> Result<()> {
    if n_theta < 4 {
        return Err(Error::invalid("n_theta must be at least 4"));
    }
    Ok(())
}

/// Angular average `Ã(t, x) = (1/2π) ∫ A(t, R_θ x) dθ`, evaluated on the slice through `x`.
pub fn angular_average_at(model: &CorrelationModel, t: f64, x: Vec2, n_theta: usize) -> Result<f64> {
    check_n_theta(n_theta)?;
    if model.is_radial() {
        return Ok(model.value(t, x));
    }
    Ok(periodic_mean(|th| model.value(t, x.rotate(th)), n_theta))
}

/// `Ã(t, r)`: the angular average at radius `r` (taken along `(r, 0)`).
pub fn angular_average(model: &CorrelationModel, t: f64, r: f64, n_theta: usize) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::invalid("radius must be non-negative"));
    }
    angular_average_at(model, t, Vec2::new(r, 0.0), n_theta)
}

/// `∂²_tt Ã(t, r)`.
pub fn d2tt_tilde(model: &CorrelationModel, t: f64, r: f64, n_theta: usize) -> Result<f64> {
    check_n_theta(n_theta)?;
    if !(r >= 0.0) {
        return Err(Error::invalid("radius must be non-negative"));
    }
    let x = Vec2::new(r, 0.0);
    if model.is_radial() {
        return model.d2tt(t, x);
    }
    model.check_fd_step()?;
    let h = 2.0 * PI / n_theta as f64;
    let mut acc = 0.0;
    for i in 0..n_theta {
        acc += model.d2tt(t, x.rotate(h * i as f64))?;
    }
    Ok(acc / n_theta as f64)
}

/// One named admissibility check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub max_residual: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| alloc::format!("{} (residual {:e} > {:e})", c.name, c.max_residual, c.tolerance))
            .collect()
    }
}

pub const CHECK_EVEN_TIME: &str = "evenness_in_time";
pub const CHECK_EVEN_SPACE: &str = "evenness_in_space";
pub const CHECK_SUPPORT: &str = "compact_temporal_support";
pub const CHECK_DT_ORIGIN: &str = "time_derivative_at_origin";
pub const CHECK_DX_ORIGIN: &str = "space_gradient_at_origin";

/// One-sided derivative at 0 along `dir`, with one Richardson level.
fn one_sided_slope<F: Fn(f64) -> f64>(f: F, h: f64) -> f64 {
    let f0 = f(0.0);
    let coarse = (f(h) - f0) / h;
    let fine = (f(0.5 * h) - f0) / (0.5 * h);
    2.0 * fine - coarse
}

/// Checks the structural conditions on `A` at randomized sample points.
/// Failures are reported, never raised.
pub fn validate(model: &CorrelationModel, sample_count: usize, rng_seed: u64) -> ValidationReport {
    let mut rng = stage_rng(rng_seed, Stage::Validation, 0);
    let ts = model.t_support;
    let radius = 3.0 * model.spatial().map_or(1.0, |s| s.length_scale());
    let samples = sample_count.max(1);
    let point = |rng: &mut crate::rng::StageRng| {
        let r = radius * sqrt(rng.gen::<f64>());
        let th = 2.0 * PI * rng.gen::<f64>();
        Vec2::new(r * cos(th), r * sin(th))
    };

    let a00 = model.value(0.0, Vec2::ZERO);
    let mut scale = a00.abs();
    let mut even_t = 0.0f64;
    let mut even_x = 0.0f64;
    let mut outside = 0.0f64;
    for _ in 0..samples {
        let t = ts * (2.0 * rng.gen::<f64>() - 1.0);
        let x = point(&mut rng);
        let a = model.value(t, x);
        scale = scale.max(a.abs());
        even_t = even_t.max((a - model.value(-t, x)).abs());
        even_x = even_x.max((a - model.value(t, -x)).abs());
        let t_out = ts * (1.0 + rng.gen::<f64>());
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        outside = outside.max(model.value(sign * t_out, x).abs());
    }
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let sym_tol = 1e-12 * scale;

    let h = if model.fd_step > 0.0 { model.fd_step } else { DEFAULT_FD_FRACTION * ts };
    let dt_res = one_sided_slope(|s| model.value(s, Vec2::ZERO), h)
        .abs()
        .max(one_sided_slope(|s| model.value(-s, Vec2::ZERO), h).abs());
    let hx = 1e-4 * radius / 3.0;
    let mut dx_res = 0.0f64;
    for dir in [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(-1.0, 0.0), Vec2::new(0.0, -1.0)] {
        dx_res = dx_res.max(one_sided_slope(|s| model.value(0.0, s * dir), hx).abs());
    }
    let dt_tol = 1e-6 * scale / ts;
    let dx_tol = 1e-6 * scale / (radius / 3.0);

    let mk = |name, res: f64, tol: f64| Check { name, passed: res <= tol, max_residual: res, tolerance: tol };
    ValidationReport {
        checks: alloc::vec![
            mk(CHECK_EVEN_TIME, even_t, sym_tol),
            mk(CHECK_EVEN_SPACE, even_x, sym_tol),
            mk(CHECK_SUPPORT, outside, 0.0),
            mk(CHECK_DT_ORIGIN, dt_res, dt_tol),
            mk(CHECK_DX_ORIGIN, dx_res, dx_tol),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump_model() -> CorrelationModel {
        CorrelationModel::separable(
            TemporalEnvelope::raised_cosine(4, 1.0, 1.0).unwrap(),
            SpatialProfile::gaussian_bump(1.0, 1.0).unwrap(),
        )
    }

    fn fd2<F: Fn(f64) -> f64>(f: F, t: f64, h: f64) -> f64 {
        (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h)
    }

    #[test]
    fn zero_correlation_averages_to_zero() {
        let m = CorrelationModel::zero(1.0);
        assert_eq!(angular_average(&m, 0.3, 1.2, 16).unwrap(), 0.0);
        assert_eq!(d2tt_tilde(&m, 0.0, 0.5, 16).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_bump_at_origin_is_variance() {
        let m = bump_model();
        assert_eq!(angular_average(&m, 0.0, 0.0, 8).unwrap(), 1.0);
    }

    #[test]
    fn anisotropic_angular_average_matches_brute_force() {
        // A(t, x) = f(t) x1^2: the average of cos^2 is 1/2
        let env = TemporalEnvelope::raised_cosine(2, 1.0, 1.0).unwrap();
        let e2 = env.clone();
        let m = CorrelationModel::general(Arc::new(move |t, x: Vec2| e2.value(t) * x.x * x.x), 1.0).unwrap();
        let got = angular_average(&m, 0.0, 1.0, 64).unwrap();
        assert!((got - 0.5 * env.value(0.0)).abs() < 1e-15);
        // brute-force midpoint sum over a much finer θ grid
        let n = 100_000;
        let brute: f64 = (0..n)
            .map(|i| {
                let th = 2.0 * PI * (i as f64 + 0.5) / n as f64;
                m.value(0.0, Vec2::new(cos(th), sin(th)))
            })
            .sum::<f64>()
            / n as f64;
        assert!((got - brute).abs() < 1e-10);
    }

    #[test]
    fn cosine_envelope_second_derivative() {
        // A(t, x) = cos(t) g(|x|) truncated at |t| >= π/2: ∂²tt A(0, x) = -g(|x|)
        let g = SpatialProfile::gaussian_bump(2.0, 0.7).unwrap();
        let env =
            TemporalEnvelope::custom(Arc::new(|t: f64| if t.abs() < PI / 2.0 { cos(t) } else { 0.0 }), None, PI / 2.0);
        let m = CorrelationModel::separable(env, g.clone());
        let r0 = 0.8;
        let got = d2tt_tilde(&m, 0.0, r0, 8).unwrap();
        assert!((got + g.value(r0)).abs() < 1e-7, "{got}");
    }

    #[test]
    fn raised_cosine_second_derivative_matches_fd() {
        // f(t) = cos^4(t / (4n)) on |t| <= 2πn
        for n in [1u32, 2, 3] {
            let env = TemporalEnvelope::raised_cosine(4, 2.0 * PI * n as f64, 1.0).unwrap();
            let m = CorrelationModel::separable(env.clone(), SpatialProfile::power_law(1.0).unwrap());
            let analytic = d2tt_tilde(&m, 0.0, 1.0, 8).unwrap();
            let fd = fd2(|t| cos(t / (4.0 * n as f64)).powi(4), 0.0, 1e-4);
            assert!((analytic - fd).abs() < 1e-6, "n={n}: {analytic} vs {fd}");
            // -p ω² at t = 0
            let w = 1.0 / (4.0 * n as f64);
            assert!((analytic + 4.0 * w * w).abs() < 1e-14);
        }
    }

    #[test]
    fn window_autocorrelation_matches_direct_integration() {
        for power in [2u32, 3, 4, 6] {
            let width = 1.3;
            let env = TemporalEnvelope::window_autocorrelation(power, width, 1.0).unwrap();
            let c = |u: f64| if (0.0..=width).contains(&u) { sin(PI * u / width).powi(power as i32) } else { 0.0 };
            let norm = crate::quadrature::composite_gauss_legendre(|u| c(u) * c(u), 0.0, width, 200, 10);
            for &t in &[0.0, 0.17, 0.5, 0.9, 1.25] {
                let direct =
                    crate::quadrature::composite_gauss_legendre(|u| c(u) * c(u + t), 0.0, width - t, 200, 10) / norm;
                assert!((env.value(t) - direct).abs() < 1e-12, "p={power} t={t}");
                let d2 = env.analytic_second_derivative(t).unwrap();
                let fd = fd2(|s| env.value(s), t, 1e-4);
                assert!((d2 - fd).abs() < 1e-5 * (1.0 + d2.abs()), "p={power} t={t}: {d2} vs {fd}");
            }
            assert_eq!(env.value(width), 0.0);
        }
    }

    #[test]
    fn general_model_uses_fd_and_rejects_bad_step() {
        let env = TemporalEnvelope::raised_cosine(4, 1.0, 1.0).unwrap();
        let e2 = env.clone();
        let m = CorrelationModel::general(Arc::new(move |t, x: Vec2| e2.value(t) * (-x.norm_sq()).exp()), 1.0).unwrap();
        let got = d2tt_tilde(&m, 0.2, 0.5, 16).unwrap();
        let exact = env.analytic_second_derivative(0.2).unwrap() * (-0.25f64).exp();
        assert!((got - exact).abs() < 1e-6, "{got} vs {exact}");
        let bad = m.clone().with_fd_step(0.0);
        assert!(d2tt_tilde(&bad, 0.2, 0.5, 16).is_err());
        let bad = m.with_fd_step(-1e-3);
        assert!(d2tt_tilde(&bad, 0.2, 0.5, 16).is_err());
    }

    #[test]
    fn rejects_too_few_angles() {
        assert!(angular_average(&bump_model(), 0.0, 1.0, 3).is_err());
    }

    #[test]
    fn valid_separable_model_passes_all_checks() {
        let report = validate(&bump_model(), 500, 3);
        assert!(report.all_passed(), "{:?}", report.failures());
        let m = CorrelationModel::separable(
            TemporalEnvelope::window_autocorrelation(2, 1.0, 1.0).unwrap(),
            SpatialProfile::gaussian_bump(1.0, 1.0).unwrap(),
        );
        assert!(validate(&m, 500, 4).all_passed());
    }

    #[test]
    fn shifted_envelope_fails_time_evenness() {
        let m = CorrelationModel::general(
            Arc::new(|t: f64, x: Vec2| if t.abs() < 1.0 { (t + 0.5) * (-x.norm_sq()).exp() } else { 0.0 }),
            1.0,
        )
        .unwrap();
        let report = validate(&m, 200, 5);
        assert!(!report.check(CHECK_EVEN_TIME).unwrap().passed);
        assert!(report.check(CHECK_EVEN_SPACE).unwrap().passed);
    }

    #[test]
    fn kinked_envelope_fails_origin_derivative() {
        // f(t) = 1 - |t| is even but has one-sided slopes ∓1 at the origin
        let m = CorrelationModel::separable(
            TemporalEnvelope::custom(Arc::new(|t: f64| (1.0 - t.abs()).max(0.0)), None, 1.0),
            SpatialProfile::gaussian_bump(1.0, 1.0).unwrap(),
        );
        let report = validate(&m, 200, 6);
        assert!(report.check(CHECK_EVEN_TIME).unwrap().passed);
        assert!(!report.check(CHECK_DT_ORIGIN).unwrap().passed);
    }

    #[test]
    fn leaking_support_is_reported() {
        let m = CorrelationModel::separable(
            TemporalEnvelope::custom(Arc::new(|t: f64| (-t * t).exp()), None, 1.0),
            SpatialProfile::gaussian_bump(1.0, 1.0).unwrap(),
        );
        let report = validate(&m, 100, 7);
        assert!(!report.check(CHECK_SUPPORT).unwrap().passed);
    }

    #[test]
    fn hessian_of_radial_profile_matches_fd() {
        let m = bump_model();
        let x = Vec2::new(0.4, -0.9);
        let h = m.hessian_x(0.1, x);
        let e = 1e-4;
        let f = |p: Vec2| m.value(0.1, p);
        let dxx = (f(x + Vec2::new(e, 0.0)) - 2.0 * f(x) + f(x - Vec2::new(e, 0.0))) / (e * e);
        let dxy = (f(x + Vec2::new(e, e)) - f(x + Vec2::new(e, -e)) - f(x + Vec2::new(-e, e))
            + f(x + Vec2::new(-e, -e)))
            / (4.0 * e * e);
        assert!((h[0][0] - dxx).abs() < 1e-6);
        assert!((h[0][1] - dxy).abs() < 1e-6);
    }
}
