//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::{build_surface, KFunction, SurfaceDescriptor, SurfaceKind};
use crate::model::RawMaterials;
use crate::signal::SourcePulse;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceSection {
    pub kind: SurfaceKind,
    pub area: f64,
}

impl Default for SurfaceSection {
    fn default() -> Self {
        Self {
            kind: SurfaceKind::Disk,
            area: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub position: [f64; 3],
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            position: [0.0, 0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub eps: Vec<f64>,
    /// Optional explicit spacings; must equal `√eps` elementwise.
    pub d: Option<Vec<f64>>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            eps: vec![1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0],
            d: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub t_end: f64,
    /// Time step as a fraction of the smallest propagation delay between nodes.
    pub safety: f64,
    /// Upper bound on the time step.
    pub max_step: f64,
    /// Spacing of the observation lattice in time.
    pub sample_dt: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            t_end: 8.0,
            safety: 0.4,
            max_step: 0.01,
            sample_dt: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationSection {
    pub points: Vec<[f64; 3]>,
}

impl Default for ObservationSection {
    fn default() -> Self {
        Self {
            points: vec![[0.0, 0.0, 0.5], [0.0, 0.0, -0.5], [0.4, 0.1, 0.35]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeSection {
    /// `(ω_M factor, C̄ factor)` pairs; the first row is the baseline.
    pub factors: Vec<[f64; 2]>,
    /// Probes on the far side of Γ from the source.
    pub probes: Vec<[f64; 3]>,
    pub eps: f64,
}

impl Default for RegimeSection {
    fn default() -> Self {
        Self {
            factors: vec![[1.0, 1.0], [100.0, 1.0], [0.01, 100.0], [10.0, 1.0], [0.1, 1.0]],
            probes: vec![[0.0, 0.0, -0.3], [0.15, 0.0, -0.35]],
            eps: 1.0 / 64.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountingSection {
    pub d: Vec<f64>,
}

impl Default for CountingSection {
    fn default() -> Self {
        Self {
            d: vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub surface: SurfaceSection,
    pub k: KFunction,
    pub materials: RawMaterials,
    pub pulse: SourcePulse,
    pub source: SourceSection,
    pub sweep: SweepSection,
    pub time: TimeSection,
    pub observation: ObservationSection,
    pub regimes: RegimeSection,
    pub counting: CountingSection,
    pub output: OutputSection,
    /// Downgrade failed solvability conditions to warnings.
    pub warn_only: bool,
}

pub fn to_vec3(p: &[f64; 3]) -> Vec3 {
    Vec3::new(p[0], p[1], p[2])
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn surface(&self) -> Result<SurfaceDescriptor> {
        build_surface(self.surface.kind, self.surface.area)
    }

    pub fn source_position(&self) -> Vec3 {
        to_vec3(&self.source.position)
    }

    pub fn observation_points(&self) -> Vec<Vec3> {
        self.observation.points.iter().map(to_vec3).collect()
    }

    /// Spacings of the sweep, `d = √ε`.
    pub fn sweep_spacings(&self) -> Vec<f64> {
        self.sweep.eps.iter().map(|e| e.sqrt()).collect()
    }

    /// Checks everything that does not need a solver run.
    pub fn validate(&self) -> Result<()> {
        self.materials.validate()?;
        self.pulse.validate()?;
        let surface = self.surface()?;
        let t = &self.time;
        for (name, v) in [
            ("t_end", t.t_end),
            ("safety", t.safety),
            ("max_step", t.max_step),
            ("sample_dt", t.sample_dt),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("time.{name} must be positive, got {v}")));
            }
        }
        if t.safety > 0.5 {
            return Err(Error::Config(
                "time.safety above 0.5 breaks the delay-step bound".into(),
            ));
        }
        if self.sweep.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::Config("sweep.eps values must lie in (0, 1)".into()));
        }
        if let Some(d) = &self.sweep.d {
            if d.len() != self.sweep.eps.len()
                || d.iter()
                    .zip(&self.sweep.eps)
                    .any(|(d, e)| (d - e.sqrt()).abs() > 1e-12 * d.abs())
            {
                return Err(Error::Config("sweep.d must equal √eps elementwise".into()));
            }
        }
        let d_max = self
            .sweep_spacings()
            .into_iter()
            .chain([self.materials.eps.sqrt(), self.regimes.eps.sqrt()])
            .fold(0.0, f64::max);
        for p in self.observation_points() {
            let dist = surface.distance_to(&p);
            if dist < 2.0 * d_max {
                return Err(Error::Config(format!(
                    "observation point {p:?} lies {dist:.3} from the surface, closer than 2 × max d = {:.3}",
                    2.0 * d_max
                )));
            }
        }
        if self.observation.points.is_empty() {
            return Err(Error::Config("at least one observation point is required".into()));
        }
        if surface.distance_to(&self.source_position()) < 5.0 * d_max {
            return Err(Error::Config("source is closer than 5 × max d to the surface".into()));
        }
        Ok(())
    }
}
