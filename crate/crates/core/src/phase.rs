//! Wrapped-phase estimation from phase-shifted intensity samples.
//!
//! The sample model is `I_n = I0 * (1 + a * cos(phi + delta_n))`. Rewriting it
//! as `I_n = x0 + x1 cos(delta_n) + x2 sin(delta_n)` makes the estimate a
//! linear least-squares problem whose 3×3 normal matrix depends only on the
//! shift schedule, so its inverse is computed once and reused for every
//! pixel that shares the schedule. Then `x1 = I0 a cos(phi)`,
//! `x2 = -I0 a sin(phi)` and `phi = -atan2(x2, x1)`.

use std::f64::consts::PI;

use nalgebra::Matrix3;

use crate::error::{Error, Result};

/// Condition number of the normal matrix above which a schedule is rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Relative size below which the fitted modulation counts as zero.
const ZERO_MODULATION_RTOL: f64 = 1e-10;

/// Reference phases of a phase-shifted sequence, in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSchedule {
    deltas: Vec<f64>,
}

impl ShiftSchedule {
    pub fn new(deltas: Vec<f64>) -> Result<Self> {
        if deltas.len() < 3 {
            return Err(Error::InsufficientSamples {
                found: deltas.len(),
            });
        }
        if let Some(d) = deltas.iter().find(|d| !d.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite shift {d}")));
        }
        Ok(Self { deltas })
    }

    /// The standard `steps`-step schedule `2π n / steps`, `n = 0..steps`.
    pub fn uniform(steps: usize) -> Result<Self> {
        Self::new(uniform_shifts(steps))
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    /// True when the shifts equal the standard schedule `2π n / N` (to 1e-12
    /// modulo 2π), which is what the closed-form fast path assumes.
    pub fn is_uniform(&self) -> bool {
        let n = self.deltas.len() as f64;
        self.deltas.iter().enumerate().all(|(i, &d)| {
            let expected = 2.0 * PI * i as f64 / n;
            crate::image::wrap_phase(d - expected).abs() < 1e-12
        })
    }

    /// Returns the schedule with the listed positions removed.
    pub fn without(&self, drop: impl Fn(usize) -> bool) -> Vec<f64> {
        self.deltas
            .iter()
            .enumerate()
            .filter(|&(i, _)| !drop(i))
            .map(|(_, &d)| d)
            .collect()
    }
}

/// `2π n / steps` for `n = 0..steps`.
pub fn uniform_shifts(steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|n| 2.0 * PI * n as f64 / steps as f64)
        .collect()
}

/// The normal matrix of the three-parameter sinusoid fit over `deltas`.
pub fn normal_matrix(deltas: &[f64]) -> Matrix3<f64> {
    let mut a = Matrix3::zeros();
    for &d in deltas {
        let (s, c) = d.sin_cos();
        let row = [1.0, c, s];
        for i in 0..3 {
            for j in 0..3 {
                a[(i, j)] += row[i] * row[j];
            }
        }
    }
    a
}

/// Inverse of the normal matrix for one schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientMatrix {
    c: Matrix3<f64>,
}

impl CoefficientMatrix {
    /// Entry `c_ij` with zero-based indices.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.c[(i, j)]
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.c
    }
}

/// Inverts the normal matrix of `schedule`, rejecting schedules whose matrix
/// is singular or whose condition number exceeds [`MAX_CONDITION`].
pub fn build_coefficients(schedule: &ShiftSchedule) -> Result<CoefficientMatrix> {
    coefficients_for(schedule.deltas())
}

pub(crate) fn coefficients_for(deltas: &[f64]) -> Result<CoefficientMatrix> {
    let a = normal_matrix(deltas);
    let sv = a.singular_values();
    let (max, min) = (sv.max(), sv.min());
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::DegenerateSchedule { condition });
    }
    let c = a
        .try_inverse()
        .ok_or(Error::DegenerateSchedule { condition })?;
    Ok(CoefficientMatrix { c })
}

/// Folds `-atan2(y, x)` into (−π, π].
#[inline]
fn neg_atan2(y: f64, x: f64) -> f64 {
    let p = -y.atan2(x);
    if p <= -PI {
        p + 2.0 * PI
    } else {
        p
    }
}

fn check_len(samples: &[f64], deltas: &[f64]) -> Result<()> {
    if samples.len() != deltas.len() {
        return Err(Error::LengthMismatch {
            what: "sample vector",
            expected: deltas.len(),
            found: samples.len(),
        });
    }
    Ok(())
}

fn modulation_is_zero(x: f64, y: f64, samples: &[f64]) -> bool {
    let scale: f64 = samples
        .iter()
        .map(|s| s.abs())
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    x.hypot(y) <= ZERO_MODULATION_RTOL * scale
}

/// Least-squares wrapped phase for an arbitrary schedule of three or more
/// shifts. `coeffs` must come from [`build_coefficients`] on the same schedule.
pub fn solve_generalized(
    samples: &[f64],
    schedule: &ShiftSchedule,
    coeffs: &CoefficientMatrix,
) -> Result<f64> {
    check_len(samples, schedule.deltas())?;
    solve_with(samples, schedule.deltas(), coeffs)
}

pub(crate) fn solve_with(
    samples: &[f64],
    deltas: &[f64],
    coeffs: &CoefficientMatrix,
) -> Result<f64> {
    let (mut s0, mut sc, mut ss) = (0.0, 0.0, 0.0);
    for (&i, &d) in samples.iter().zip(deltas) {
        let (s, c) = d.sin_cos();
        s0 += i;
        sc += i * c;
        ss += i * s;
    }
    let c = &coeffs.c;
    let a1 = c[(1, 0)] * s0 + c[(1, 1)] * sc + c[(1, 2)] * ss;
    let a2 = c[(2, 0)] * s0 + c[(2, 1)] * sc + c[(2, 2)] * ss;
    if modulation_is_zero(a1, a2, samples) {
        return Err(Error::ZeroModulation);
    }
    Ok(neg_atan2(a2, a1))
}

/// Closed-form wrapped phase for the standard `N`-step schedule.
///
/// The caller is responsible for passing a uniform schedule; on any other
/// schedule the result is biased.
pub fn solve_standard(samples: &[f64], schedule: &ShiftSchedule) -> Result<f64> {
    check_len(samples, schedule.deltas())?;
    standard_with(samples, schedule.deltas())
}

pub(crate) fn standard_with(samples: &[f64], deltas: &[f64]) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (&i, &d) in samples.iter().zip(deltas) {
        let (s, c) = d.sin_cos();
        num += i * s;
        den += i * c;
    }
    if modulation_is_zero(num, den, samples) {
        return Err(Error::ZeroModulation);
    }
    Ok(neg_atan2(num, den))
}

/// Parameters of the additive-noise phase error law.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseModel {
    /// Standard deviation of additive Gaussian noise, in intensity counts.
    pub sigma: f64,
    /// Number of phase-shift steps.
    pub steps: f64,
    /// Fringe count across the field (dimensionless).
    pub frequency: f64,
    /// Fringe modulation, in intensity counts.
    pub modulation: f64,
}

/// Predicted variance of the phase error, `2σ² / (N f² B²)`, in radians².
pub fn predict_phase_variance(model: &NoiseModel) -> Result<f64> {
    let NoiseModel {
        sigma,
        steps,
        frequency,
        modulation,
    } = *model;
    for (name, v) in [
        ("sigma", sigma),
        ("steps", steps),
        ("frequency", frequency),
        ("modulation", modulation),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise model {name} must be positive, got {v}"
            )));
        }
    }
    Ok(2.0 * sigma * sigma / (steps * frequency * frequency * modulation * modulation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn forward(i0: f64, alpha: f64, phi: f64, deltas: &[f64]) -> Vec<f64> {
        deltas
            .iter()
            .map(|d| i0 * (1.0 + alpha * (phi + d).cos()))
            .collect()
    }

    /// Cofactor expansion inverse, independent of nalgebra's LU path.
    fn cofactor_inverse(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| {
            m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
        };
        let c = [
            [cof(1, 2, 1, 2), -cof(1, 2, 0, 2), cof(1, 2, 0, 1)],
            [-cof(0, 2, 1, 2), cof(0, 2, 0, 2), -cof(0, 2, 0, 1)],
            [cof(0, 1, 1, 2), -cof(0, 1, 0, 2), cof(0, 1, 0, 1)],
        ];
        let det = m[0][0] * c[0][0] + m[0][1] * c[0][1] + m[0][2] * c[0][2];
        let mut inv = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                inv[i][j] = c[j][i] / det;
            }
        }
        inv
    }

    fn direct_sums(deltas: &[f64]) -> [[f64; 3]; 3] {
        let n = deltas.len() as f64;
        let sc: f64 = deltas.iter().map(|d| d.cos()).sum();
        let ss: f64 = deltas.iter().map(|d| d.sin()).sum();
        let scc: f64 = deltas.iter().map(|d| d.cos() * d.cos()).sum();
        let sss: f64 = deltas.iter().map(|d| d.sin() * d.sin()).sum();
        let scs: f64 = deltas.iter().map(|d| d.sin() * d.cos()).sum();
        [[n, sc, ss], [sc, scc, scs], [ss, scs, sss]]
    }

    fn assert_diag(c: &CoefficientMatrix, diag: [f64; 3]) {
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { diag[i] } else { 0.0 };
                assert!(
                    (c.get(i, j) - want).abs() < 1e-12,
                    "c[{i}{j}] = {}",
                    c.get(i, j)
                );
            }
        }
    }

    #[test]
    fn four_step_coefficients() {
        let c = build_coefficients(&ShiftSchedule::new(vec![0.0, PI / 2.0, PI, 1.5 * PI]).unwrap())
            .unwrap();
        assert_diag(&c, [0.25, 0.5, 0.5]);
    }

    #[test]
    fn three_step_coefficients() {
        let c = build_coefficients(&ShiftSchedule::uniform(3).unwrap()).unwrap();
        assert_diag(&c, [1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn clustered_schedule_matches_cofactor_oracle() {
        let deltas = vec![0.0, 0.3, 0.6];
        let c = build_coefficients(&ShiftSchedule::new(deltas.clone()).unwrap()).unwrap();
        let oracle = cofactor_inverse(direct_sums(&deltas));
        let a = normal_matrix(&deltas);
        let product = c.matrix() * a;
        for i in 0..3 {
            for j in 0..3 {
                let rel = (c.get(i, j) - oracle[i][j]).abs() / oracle[i][j].abs().max(1.0);
                assert!(rel < 1e-9, "c[{i}{j}] {} vs {}", c.get(i, j), oracle[i][j]);
                assert!((c.get(i, j) - c.get(j, i)).abs() <= 1e-9 * c.get(i, j).abs().max(1.0));
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((product[(i, j)] - id).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_schedules_are_rejected() {
        let same = ShiftSchedule::new(vec![0.7, 0.7, 0.7]).unwrap();
        assert!(matches!(
            build_coefficients(&same),
            Err(Error::DegenerateSchedule { .. })
        ));
        // two distinct shifts cannot pin three unknowns
        let two = ShiftSchedule::new(vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(build_coefficients(&two).is_err());
        assert!(ShiftSchedule::new(vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn generalized_zero_phase() {
        let s = ShiftSchedule::new(vec![0.0, PI / 2.0, PI, 1.5 * PI]).unwrap();
        let c = build_coefficients(&s).unwrap();
        let phi = solve_generalized(&[150.0, 100.0, 50.0, 100.0], &s, &c).unwrap();
        assert!(phi.abs() < 1e-12);
    }

    #[test]
    fn generalized_on_three_of_four_shifts() {
        let s = ShiftSchedule::new(vec![0.0, PI / 2.0, PI]).unwrap();
        let c = build_coefficients(&s).unwrap();
        let samples = forward(100.0, 0.4, 0.7, s.deltas());
        let phi = solve_generalized(&samples, &s, &c).unwrap();
        assert!((phi - 0.7).abs() < 1e-9);
    }

    #[test]
    fn flat_samples_have_zero_modulation() {
        for s in [
            ShiftSchedule::uniform(4).unwrap(),
            ShiftSchedule::new(vec![0.0, 0.4, 2.0, 3.1]).unwrap(),
        ] {
            let c = build_coefficients(&s).unwrap();
            let flat = vec![100.0; s.len()];
            assert!(matches!(
                solve_generalized(&flat, &s, &c),
                Err(Error::ZeroModulation)
            ));
        }
        let s = ShiftSchedule::uniform(4).unwrap();
        assert!(matches!(
            solve_standard(&[100.0; 4], &s),
            Err(Error::ZeroModulation)
        ));
        assert!(matches!(
            solve_standard(&[0.0; 4], &s),
            Err(Error::ZeroModulation)
        ));
    }

    #[test]
    fn length_mismatch_is_reported() {
        let s = ShiftSchedule::uniform(4).unwrap();
        let c = build_coefficients(&s).unwrap();
        assert!(matches!(
            solve_generalized(&[1.0, 2.0, 3.0], &s, &c),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(solve_standard(&[1.0, 2.0, 3.0], &s).is_err());
    }

    #[test]
    fn standard_zero_phase_and_eight_step() {
        let s4 = ShiftSchedule::uniform(4).unwrap();
        assert!(
            solve_standard(&[150.0, 100.0, 50.0, 100.0], &s4)
                .unwrap()
                .abs()
                < 1e-12
        );
        let s8 = ShiftSchedule::uniform(8).unwrap();
        let phi = solve_standard(&forward(120.0, 0.6, -2.0, s8.deltas()), &s8).unwrap();
        assert!((phi + 2.0).abs() < 1e-9);
    }

    #[test]
    fn result_at_pi_is_in_canonical_interval() {
        let s = ShiftSchedule::uniform(4).unwrap();
        let c = build_coefficients(&s).unwrap();
        let samples = forward(100.0, 0.5, PI, s.deltas());
        for phi in [
            solve_standard(&samples, &s).unwrap(),
            solve_generalized(&samples, &s, &c).unwrap(),
        ] {
            assert!(phi > -PI && phi <= PI);
            assert!((phi.abs() - PI).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_detection() {
        assert!(ShiftSchedule::uniform(12).unwrap().is_uniform());
        assert!(!ShiftSchedule::new(vec![0.0, 0.3, 0.6])
            .unwrap()
            .is_uniform());
        let shifted: Vec<f64> = uniform_shifts(4).iter().map(|d| d + 2.0 * PI).collect();
        assert!(ShiftSchedule::new(shifted).unwrap().is_uniform());
    }

    #[test]
    fn variance_law_values() {
        let base = NoiseModel {
            sigma: 1.0,
            steps: 4.0,
            frequency: 1.0,
            modulation: 100.0,
        };
        let v = predict_phase_variance(&base).unwrap();
        assert!((v - 5.0e-5).abs() < 1e-18);
        let f2 = predict_phase_variance(&NoiseModel {
            frequency: 2.0,
            ..base
        })
        .unwrap();
        assert!((f2 - v / 4.0).abs() < 1e-18);
        let n2 = predict_phase_variance(&NoiseModel { steps: 8.0, ..base }).unwrap();
        assert!((n2 - v / 2.0).abs() < 1e-18);
        assert!(predict_phase_variance(&NoiseModel { sigma: 0.0, ..base }).is_err());
        assert!(predict_phase_variance(&NoiseModel {
            modulation: -1.0,
            ..base
        })
        .is_err());
    }

    fn distinct_schedule() -> impl Strategy<Value = Vec<f64>> {
        // well-separated shifts keep the normal matrix comfortably conditioned
        (
            3usize..10,
            -PI..PI,
            proptest::collection::vec(0.25f64..1.2, 10),
        )
            .prop_map(|(k, start, gaps)| {
                let mut d = start;
                gaps[..k]
                    .iter()
                    .map(|g| {
                        let out = d;
                        d += g;
                        out
                    })
                    .collect()
            })
    }

    proptest! {
        #[test]
        fn exact_recovery(
            deltas in distinct_schedule(),
            phi in -PI..PI,
            i0 in 1.0f64..200.0,
            alpha in 0.05f64..1.0,
        ) {
            let phi = if phi == -PI { PI } else { phi };
            let s = ShiftSchedule::new(deltas).unwrap();
            let c = build_coefficients(&s).unwrap();
            let got = solve_generalized(&forward(i0, alpha, phi, s.deltas()), &s, &c).unwrap();
            prop_assert!(crate::image::wrap_phase(got - phi).abs() < 1e-9);
        }

        #[test]
        fn reduction_to_standard(
            steps in 3usize..16,
            phi in -PI..PI,
            i0 in 1.0f64..200.0,
            alpha in 0.05f64..1.0,
        ) {
            let s = ShiftSchedule::uniform(steps).unwrap();
            let c = build_coefficients(&s).unwrap();
            let samples = forward(i0, alpha, phi, s.deltas());
            let g = solve_generalized(&samples, &s, &c).unwrap();
            let st = solve_standard(&samples, &s).unwrap();
            prop_assert!(crate::image::wrap_phase(g - st).abs() <= 1e-9);
        }

        #[test]
        fn shift_equivariance(
            deltas in distinct_schedule(),
            phi in -PI..PI,
            offset in -3.0f64..3.0,
        ) {
            let s = ShiftSchedule::new(deltas.clone()).unwrap();
            let c = build_coefficients(&s).unwrap();
            let samples = forward(90.0, 0.7, phi, s.deltas());
            let base = solve_generalized(&samples, &s, &c).unwrap();
            // same intensities, schedule relabelled by +offset
            let moved = ShiftSchedule::new(deltas.iter().map(|d| d + offset).collect()).unwrap();
            let cm = build_coefficients(&moved).unwrap();
            let got = solve_generalized(&samples, &moved, &cm).unwrap();
            prop_assert!(crate::image::wrap_phase(got - (base - offset)).abs() < 1e-9);
        }

        #[test]
        fn gain_and_offset_invariance(
            deltas in distinct_schedule(),
            phi in -PI..PI,
            gain in 0.01f64..50.0,
            offset in -500.0f64..500.0,
        ) {
            let s = ShiftSchedule::new(deltas).unwrap();
            let c = build_coefficients(&s).unwrap();
            let samples = forward(100.0, 0.5, phi, s.deltas());
            let base = solve_generalized(&samples, &s, &c).unwrap();
            let scaled: Vec<f64> = samples.iter().map(|x| x * gain).collect();
            let lifted: Vec<f64> = samples.iter().map(|x| x + offset).collect();
            let g = solve_generalized(&scaled, &s, &c).unwrap();
            let o = solve_generalized(&lifted, &s, &c).unwrap();
            prop_assert!(crate::image::wrap_phase(g - base).abs() < 1e-9);
            prop_assert!(crate::image::wrap_phase(o - base).abs() < 1e-9);
        }
    }
}
