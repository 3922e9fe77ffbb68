//! The JSON run configuration.

use std::path::{Path, PathBuf};

use hdr_fringe::sim::{BuiltinParams, ProjectorModel, SensorModel, StereoRig};
use hdr_fringe::stereo::{DEFAULT_MAX_PHASE_GAP, DEFAULT_MAX_RESIDUAL};
use hdr_fringe::HdrConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// One frequency level: fringe period in projector pixels and the number of
/// uniform phase shifts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub period: f64,
    pub steps: usize,
}

/// Projector parameters other than the level list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectorSettings {
    pub intensity: f64,
    pub modulation: f64,
    pub blur: f64,
    pub px_per_mm: f64,
}

impl Default for ProjectorSettings {
    fn default() -> Self {
        let p = ProjectorModel::default();
        Self {
            intensity: p.intensity,
            modulation: p.modulation,
            blur: p.blur,
            px_per_mm: p.px_per_mm,
        }
    }
}

/// Everything `simulate` needs besides the level list and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    /// Built-in scene name, or a path to a scene file.
    pub scene: String,
    pub scene_params: BuiltinParams,
    pub projector: ProjectorSettings,
    pub sensor: SensorModel,
    pub rig: StereoRig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            scene: "shiny-disk-on-ramp".into(),
            scene_params: BuiltinParams::default(),
            projector: ProjectorSettings::default(),
            sensor: SensorModel::default(),
            rig: StereoRig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Levels from loosest to densest.
    pub levels: Vec<Level>,
    pub sat_thr: u8,
    pub max_phase_gap: f64,
    pub max_residual: f64,
    /// Camera file, relative to `input` unless absolute.
    pub camera_file: PathBuf,
    /// Dataset directory read by the processing stages.
    pub input: PathBuf,
    /// Directory all stages write to.
    pub output: PathBuf,
    pub seed: u64,
    pub simulation: SimulationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let p = ProjectorModel::default();
        Self {
            levels: p
                .periods
                .iter()
                .zip(&p.steps)
                .map(|(&period, &steps)| Level { period, steps })
                .collect(),
            sat_thr: HdrConfig::default().sat_thr(),
            max_phase_gap: DEFAULT_MAX_PHASE_GAP,
            max_residual: DEFAULT_MAX_RESIDUAL,
            camera_file: PathBuf::from("cameras.txt"),
            input: PathBuf::from("data"),
            output: PathBuf::from("out"),
            seed: 1,
            simulation: SimulationConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            reason: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config {
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |reason: String| Err(CliError::Config { reason });
        self.hdr()?;
        self.projector().validate().map_err(|e| CliError::Config {
            reason: e.to_string(),
        })?;
        self.simulation.sensor.validate().map_err(|e| CliError::Config {
            reason: e.to_string(),
        })?;
        if !(self.max_phase_gap > 0.0) {
            return bad(format!("max_phase_gap must be positive, got {}", self.max_phase_gap));
        }
        if !(self.max_residual > 0.0) {
            return bad(format!("max_residual must be positive, got {}", self.max_residual));
        }
        if self.levels.len() > u8::MAX as usize {
            return bad("too many levels".into());
        }
        Ok(())
    }

    pub fn hdr(&self) -> Result<HdrConfig, CliError> {
        HdrConfig::new(self.sat_thr).map_err(|e| CliError::Config {
            reason: e.to_string(),
        })
    }

    pub fn periods(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.period).collect()
    }

    pub fn steps(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.steps).collect()
    }

    pub fn projector(&self) -> ProjectorModel {
        let s = &self.simulation.projector;
        ProjectorModel {
            periods: self.periods(),
            steps: self.steps(),
            intensity: s.intensity,
            modulation: s.modulation,
            blur: s.blur,
            px_per_mm: s.px_per_mm,
        }
    }

    pub fn camera_path(&self) -> PathBuf {
        self.input.join(&self.camera_file)
    }
}
