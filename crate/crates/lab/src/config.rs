//! The TOML run configuration.

use std::path::PathBuf;

use gyroshe_core::correlation::{CorrelationModel, SpatialProfile, TemporalEnvelope};
use gyroshe_core::field::FieldSpec;
use gyroshe_core::harness::{ExperimentConfig, KINETIC_COEFFICIENT_SCALE};
use gyroshe_core::kinetics::InitialDistribution;
use gyroshe_core::she::EnergyGrid;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::LabError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub correlation: CorrelationSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinetics: Option<KineticsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub she: Option<SheSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<OutputsSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    GaussianBump,
    PowerLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    /// Autocorrelation of a `sin^p` window; the only envelope the field can realize.
    Window,
    RaisedCosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSection {
    pub kind: ProfileKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
    pub envelope: EnvelopeKind,
    #[serde(default = "default_envelope_power")]
    pub envelope_power: u32,
    pub t_support: f64,
    pub n: u32,
}

fn default_envelope_power() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    pub modes: usize,
    pub block_length: f64,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticsSection {
    pub epsilons: Vec<f64>,
    pub particles: usize,
    pub realizations: usize,
    pub dt_per_gyro: usize,
    pub t_end: f64,
    pub init: InitSection,
    /// Skip the `2πnε ≤ T/10` check.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_coarse_epsilon: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Delta,
    SmoothBump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub kind: InitKind,
    pub e0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SheSection {
    pub e_max: f64,
    pub cells: usize,
    pub dt: f64,
    /// Factor applied to the tabulated coefficient; defaults to `1/(2π)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficient_scale: Option<f64>,
    /// Points of the coefficient table on `[0, e_max]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficient_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    pub dir: PathBuf,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub times: Vec<f64>,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_formats() -> Vec<String> {
    vec!["csv".into(), "json".into()]
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> LabError {
    LabError::Validation(format!("{field}: {msg}"))
}

fn missing(section: &str) -> LabError {
    LabError::Validation(format!("missing [{section}] section"))
}

impl RunConfigFile {
    pub fn parse(text: &str) -> Result<Self, LabError> {
        let cfg: RunConfigFile = toml::from_str(text).map_err(|e| LabError::Validation(format!("config: {e}")))?;
        cfg.check_formats()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical TOML echo of the parsed configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical echo, hex encoded.
    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.canonical().as_bytes()))
    }

    fn check_formats(&self) -> Result<(), LabError> {
        if let Some(o) = &self.outputs {
            if let Some(f) = o.formats.iter().find(|f| !matches!(f.as_str(), "csv" | "json")) {
                return Err(invalid("outputs.formats", format!("unknown format {f:?}")));
            }
        }
        Ok(())
    }

    pub fn spatial(&self) -> Result<SpatialProfile, LabError> {
        let c = &self.correlation;
        match c.kind {
            ProfileKind::GaussianBump => {
                let s2 = c.sigma2.ok_or_else(|| invalid("correlation.sigma2", "required for gaussian_bump"))?;
                let ell = c.ell.ok_or_else(|| invalid("correlation.ell", "required for gaussian_bump"))?;
                SpatialProfile::gaussian_bump(s2, ell).map_err(|e| invalid("correlation", e))
            }
            ProfileKind::PowerLaw => {
                let alpha = c.alpha.ok_or_else(|| invalid("correlation.alpha", "required for power_law"))?;
                SpatialProfile::power_law(alpha).map_err(|e| invalid("correlation.alpha", e))
            }
        }
    }

    pub fn envelope(&self) -> Result<TemporalEnvelope, LabError> {
        let c = &self.correlation;
        if !(c.t_support > 0.0) {
            return Err(invalid("correlation.t_support", "must be positive"));
        }
        match c.envelope {
            EnvelopeKind::Window => TemporalEnvelope::window_autocorrelation(c.envelope_power, c.t_support, 1.0),
            EnvelopeKind::RaisedCosine => TemporalEnvelope::raised_cosine(c.envelope_power, c.t_support, 1.0),
        }
        .map_err(|e| invalid("correlation.envelope_power", e))
    }

    pub fn n(&self) -> Result<u32, LabError> {
        if self.correlation.n == 0 {
            return Err(invalid("correlation.n", "must be at least 1"));
        }
        Ok(self.correlation.n)
    }

    pub fn model(&self) -> Result<CorrelationModel, LabError> {
        Ok(CorrelationModel::separable(self.envelope()?, self.spatial()?))
    }

    pub fn field_spec(&self) -> Result<FieldSpec, LabError> {
        let f = self.field.as_ref().ok_or_else(|| missing("field"))?;
        let c = &self.correlation;
        if c.envelope != EnvelopeKind::Window {
            return Err(invalid("correlation.envelope", "the field can only realize the window envelope"));
        }
        if c.kind == ProfileKind::PowerLaw {
            return Err(invalid("correlation.kind", "power-law profiles cannot be synthesized"));
        }
        if (f.block_length - c.t_support).abs() > 1e-12 * c.t_support {
            return Err(invalid("field.block_length", "must equal correlation.t_support"));
        }
        if f.modes == 0 {
            return Err(invalid("field.modes", "must be at least 1"));
        }
        FieldSpec::with_window(self.spatial()?, c.envelope_power, f.modes, f.block_length, f.master_seed)
            .map_err(|e| invalid("field", e))
    }

    pub fn master_seed(&self) -> Option<u64> {
        self.field.as_ref().map(|f| f.master_seed)
    }

    pub fn grid(&self) -> Result<EnergyGrid, LabError> {
        let s = self.she.as_ref().ok_or_else(|| missing("she"))?;
        EnergyGrid::new(s.e_max, s.cells).map_err(|e| invalid("she", e))
    }

    pub fn coefficient_scale(&self) -> f64 {
        self.she.as_ref().and_then(|s| s.coefficient_scale).unwrap_or(KINETIC_COEFFICIENT_SCALE)
    }

    pub fn init(&self) -> Result<InitialDistribution, LabError> {
        let k = self.kinetics.as_ref().ok_or_else(|| missing("kinetics"))?;
        let init = match k.init.kind {
            InitKind::Delta => InitialDistribution::Delta { e0: k.init.e0 },
            InitKind::SmoothBump => InitialDistribution::SmoothBump {
                center: k.init.e0,
                half_width: k
                    .init
                    .half_width
                    .ok_or_else(|| invalid("kinetics.init.half_width", "required for smooth_bump"))?,
            },
        };
        init.validate().map_err(|e| invalid("kinetics.init", e))?;
        Ok(init)
    }

    /// Output times, defaulting to the final time only.
    pub fn output_times(&self) -> Result<Vec<f64>, LabError> {
        let k = self.kinetics.as_ref().ok_or_else(|| missing("kinetics"))?;
        let times = match &self.outputs {
            Some(o) if !o.times.is_empty() => o.times.clone(),
            _ => vec![k.t_end],
        };
        if times.iter().any(|&t| !(t > 0.0 && t <= k.t_end)) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("outputs.times", "must be increasing within (0, kinetics.t_end]"));
        }
        if (times.last().copied().unwrap_or(0.0) - k.t_end).abs() > 1e-12 * k.t_end {
            return Err(invalid("outputs.times", "the last output time must equal kinetics.t_end"));
        }
        Ok(times)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.outputs.as_ref().map(|o| o.dir.clone()).unwrap_or_else(|| PathBuf::from("output"))
    }

    pub fn wants(&self, format: &str) -> bool {
        self.outputs.as_ref().map(|o| o.formats.iter().any(|f| f == format)).unwrap_or(true)
    }

    /// The full experiment; every problem is reported with the offending key.
    pub fn experiment(&self) -> Result<ExperimentConfig, LabError> {
        let k = self.kinetics.as_ref().ok_or_else(|| missing("kinetics"))?;
        if k.epsilons.is_empty() || k.epsilons.iter().any(|&e| !(e > 0.0)) {
            return Err(invalid("kinetics.epsilons", "must be a non-empty list of positive values"));
        }
        if k.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("kinetics.epsilons", "must be strictly decreasing"));
        }
        if k.dt_per_gyro < 16 {
            return Err(invalid("kinetics.dt_per_gyro", "at least 16 steps per gyro-period are required"));
        }
        if k.particles == 0 {
            return Err(invalid("kinetics.particles", "must be positive"));
        }
        if k.realizations < 2 {
            return Err(invalid("kinetics.realizations", "at least 2 are required"));
        }
        if !(k.t_end > 0.0) {
            return Err(invalid("kinetics.t_end", "must be positive"));
        }
        let s = self.she.as_ref().ok_or_else(|| missing("she"))?;
        if !(s.dt > 0.0) {
            return Err(invalid("she.dt", "must be positive"));
        }
        let field = self.field_spec()?;
        let mut cfg = ExperimentConfig::new(
            k.epsilons.clone(),
            field,
            self.grid()?,
            self.output_times()?,
            k.particles,
            k.realizations,
            self.master_seed().expect("field section checked"),
        );
        cfg.n = self.n()?;
        cfg.init = self.init()?;
        cfg.steps_per_gyro = k.dt_per_gyro;
        cfg.she_dt = s.dt;
        cfg.coefficient_scale = self.coefficient_scale();
        if let Some(p) = s.coefficient_points {
            cfg.coefficient_points = p;
        }
        cfg.strict_scale_separation = !k.allow_coarse_epsilon;
        if let Some(eps) = cfg.coarse_epsilons().first().filter(|_| cfg.strict_scale_separation) {
            return Err(invalid(
                "kinetics.epsilons",
                format!("{eps} violates 2πnε ≤ t_end/10 (set allow_coarse_epsilon = true to override)"),
            ));
        }
        cfg.validate().map_err(|e| invalid("config", e))?;
        Ok(cfg)
    }
}
