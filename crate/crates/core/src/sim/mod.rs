//! Synthetic dual-view fringe simulator.
//!
//! A projector looking straight down casts vertical sinusoidal fringes on a
//! height field; two tilted telecentric cameras observe it in rectified
//! geometry. The renderer produces quantized fringe stacks together with the
//! exact projector phase and surface point behind every camera pixel.

mod noise;
mod render;
mod scene;
mod variance;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::uniform_shifts;
use crate::stereo::AffineCamera;

pub use noise::{mix_key, splitmix64, standard_normal, GaussianField};
pub use render::{render_stacks, render_stacks_f64, GroundTruth, Rendered, View, ViewTruth};
pub use scene::{BuiltinParams, Scene, BUILTIN_SCENES, MIN_GRID};
pub use variance::{monte_carlo_phase_variance, monte_carlo_variance, LevelVariance, MIN_TRIALS};

/// Fringe projector: periods, shift counts, brightness and defocus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectorModel {
    /// Fringe period of every level in projector pixels, loosest first.
    pub periods: Vec<f64>,
    /// Number of uniform phase shifts of every level.
    pub steps: Vec<usize>,
    /// Base intensity `I_0`, counts.
    pub intensity: f64,
    /// Base modulation `α_0`.
    pub modulation: f64,
    /// Gaussian defocus radius `s`, projector pixels.
    pub blur: f64,
    /// Projector pixels per millimetre on the reference plane.
    pub px_per_mm: f64,
}

impl Default for ProjectorModel {
    fn default() -> Self {
        Self {
            periods: vec![912.0, 144.0, 24.0, 12.0],
            steps: vec![12; 4],
            intensity: 100.0,
            modulation: 0.6,
            blur: 4.3,
            px_per_mm: 228.0,
        }
    }
}

impl ProjectorModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.periods.is_empty() {
            return bad("projector needs at least one level".into());
        }
        if self.periods.len() != self.steps.len() {
            return Err(Error::LengthMismatch {
                what: "projector steps",
                expected: self.periods.len(),
                found: self.steps.len(),
            });
        }
        if self.periods.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return bad(format!("periods must be positive: {:?}", self.periods));
        }
        if self.periods.windows(2).any(|w| w[1] >= w[0]) {
            return bad(format!(
                "periods must strictly decrease: {:?}",
                self.periods
            ));
        }
        if let Some(&n) = self.steps.iter().find(|&&n| n < 3) {
            return Err(Error::InsufficientSamples { found: n });
        }
        if !(self.intensity.is_finite() && self.intensity > 0.0) {
            return bad(format!(
                "intensity must be positive, got {}",
                self.intensity
            ));
        }
        if !(self.modulation > 0.0 && self.modulation <= 1.0) {
            return bad(format!(
                "modulation must lie in (0, 1], got {}",
                self.modulation
            ));
        }
        if !(self.blur.is_finite() && self.blur >= 0.0) {
            return bad(format!("blur must be non-negative, got {}", self.blur));
        }
        if !(self.px_per_mm.is_finite() && self.px_per_mm > 0.0) {
            return bad(format!(
                "px_per_mm must be positive, got {}",
                self.px_per_mm
            ));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.periods.len()
    }

    /// Modulation after defocus, `α_0 exp(-(π s / per)²)`.
    pub fn contrast(&self, period: f64) -> f64 {
        self.modulation * (-(PI * self.blur / period).powi(2)).exp()
    }

    /// Fringe amplitude `I_0 α(per)` in counts, before reflectance.
    pub fn amplitude(&self, period: f64) -> f64 {
        self.intensity * self.contrast(period)
    }

    /// Absolute projector phase of level `level` at lateral position `x` mm.
    pub fn phase_at(&self, x: f64, level: usize) -> f64 {
        2.0 * PI * self.px_per_mm * x / self.periods[level]
    }

    pub fn shifts(&self, level: usize) -> Vec<f64> {
        uniform_shifts(self.steps[level])
    }

    /// Noise-free intensity for reflectance `r`, phase `phi` and shift `delta`.
    pub fn intensity_at(&self, r: f64, period: f64, phi: f64, delta: f64) -> f64 {
        r * self.intensity * (1.0 + self.contrast(period) * (phi + delta).cos())
    }
}

/// 8-bit camera sensor with additive Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModel {
    /// Noise standard deviation, counts.
    pub sigma: f64,
}

pub const FULL_SCALE: f64 = 255.0;

impl Default for SensorModel {
    fn default() -> Self {
        Self { sigma: 1.0 }
    }
}

impl SensorModel {
    pub fn new(sigma: f64) -> Result<Self> {
        let s = Self { sigma };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sensor sigma must be non-negative, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Rounds half away from zero, then clamps to `[0, 255]`.
    pub fn quantize(value: f64) -> u8 {
        value.round().clamp(0.0, FULL_SCALE) as u8
    }

    /// Clamps to `[0, 255]` without rounding.
    pub fn clip(value: f64) -> f64 {
        value.clamp(0.0, FULL_SCALE)
    }
}

/// Two telecentric cameras tilted by `±tilt` about the y axis, rectified so
/// that a surface point lands on the same image row in both views.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StereoRig {
    pub width: usize,
    pub height: usize,
    pub magnification: f64,
    /// Sensor pixel pitch, mm.
    pub pixel_pitch: f64,
    /// Half of the vergence angle, degrees.
    pub tilt_deg: f64,
}

impl Default for StereoRig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            magnification: 0.296,
            pixel_pitch: 0.00345,
            tilt_deg: 15.0,
        }
    }
}

impl StereoRig {
    /// Image pixels per millimetre on the object.
    pub fn scale(&self) -> f64 {
        self.magnification / self.pixel_pitch
    }

    /// Left and right camera matrices.
    pub fn cameras(&self) -> Result<(AffineCamera, AffineCamera)> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::InvalidParameter(format!(
                "rig image size {}x{} is too small",
                self.width, self.height
            )));
        }
        let k = self.scale();
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidParameter(format!("bad rig scale {k}")));
        }
        let (s, c) = self.tilt_deg.to_radians().sin_cos();
        let cu = (self.width as f64 - 1.0) / 2.0;
        let cv = (self.height as f64 - 1.0) / 2.0;
        let left = AffineCamera::new([[k * c, 0.0, k * s, cu], [0.0, k, 0.0, cv]])?;
        let right = AffineCamera::new([[k * c, 0.0, -k * s, cu], [0.0, k, 0.0, cv]])?;
        Ok((left, right))
    }
}
