use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::noise::GaussianField;
use super::{ProjectorModel, SensorModel};
use crate::error::{Error, Result};
use crate::hdr::LevelSolver;
use crate::image::wrap_phase;
use crate::phase::{predict_phase_variance, NoiseModel, ShiftSchedule};

pub const MIN_TRIALS: usize = 10_000;

const CHUNK: usize = 4096;

/// Empirical and predicted phase noise of one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelVariance {
    pub period: f64,
    pub steps: usize,
    /// Fringe amplitude `I_0 α(per)`, counts.
    pub modulation: f64,
    /// Var(φ̂ − Φ) on the level's own scale, rad².
    pub empirical: f64,
    /// The same error rescaled to the densest level's phase scale.
    pub equivalent: f64,
    /// `2σ²/(N B²)`; zero when σ = 0.
    pub predicted: f64,
}

/// Monte-Carlo phase error of a single pixel model: `trials` draws of a
/// uniformly random phase, sampled without clipping or quantization as
/// `offset + modulation cos(Φ + δ_n) + σ ε`.
pub fn monte_carlo_phase_variance(
    shifts: &[f64],
    offset: f64,
    modulation: f64,
    sigma: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidParameter(format!(
            "at least {MIN_TRIALS} trials are required, got {trials}"
        )));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be non-negative, got {sigma}"
        )));
    }
    if !(modulation.is_finite() && modulation > 0.0) {
        return Err(Error::ZeroModulation);
    }
    let solver = LevelSolver::new(ShiftSchedule::new(shifts.to_vec())?);
    let field = GaussianField::new(seed);
    let n = shifts.len();
    let partial: Vec<(f64, f64)> = (0..trials.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut buf = vec![0.0; n];
            let (mut s1, mut s2) = (0.0, 0.0);
            for t in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                let phi = PI * (2.0 * field.uniform(&[t as u64]) - 1.0);
                for (k, (b, &d)) in buf.iter_mut().zip(shifts).enumerate() {
                    let eps = if sigma > 0.0 {
                        sigma * field.sample(&[t as u64, k as u64])
                    } else {
                        0.0
                    };
                    *b = offset + modulation * (phi + d).cos() + eps;
                }
                let err = match solver.solve_all(&buf) {
                    Some(est) => wrap_phase(est - phi),
                    None => f64::NAN,
                };
                s1 += err;
                s2 += err * err;
            }
            (s1, s2)
        })
        .collect();
    let (s1, s2) = partial
        .iter()
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let mean = s1 / trials as f64;
    Ok((s2 / trials as f64 - mean * mean).max(0.0))
}

/// Per-level Monte-Carlo phase variance of a projector/sensor pair with
/// unit reflectance, alongside the additive-noise prediction.
pub fn monte_carlo_variance(
    proj: &ProjectorModel,
    sensor: &SensorModel,
    trials: usize,
    seed: u64,
) -> Result<Vec<LevelVariance>> {
    proj.validate()?;
    sensor.validate()?;
    let densest = *proj.periods.last().unwrap();
    (0..proj.levels())
        .map(|m| {
            let period = proj.periods[m];
            let modulation = proj.amplitude(period);
            let empirical = monte_carlo_phase_variance(
                &proj.shifts(m),
                proj.intensity,
                modulation,
                sensor.sigma,
                trials,
                seed.wrapping_add(m as u64),
            )?;
            let predicted = if sensor.sigma > 0.0 {
                predict_phase_variance(&NoiseModel {
                    sigma: sensor.sigma,
                    steps: proj.steps[m] as f64,
                    frequency: 1.0,
                    modulation,
                })?
            } else {
                0.0
            };
            Ok(LevelVariance {
                period,
                steps: proj.steps[m],
                modulation,
                empirical,
                equivalent: empirical * (period / densest).powi(2),
                predicted,
            })
        })
        .collect()
}
