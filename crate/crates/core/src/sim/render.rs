use rayon::prelude::*;

use super::noise::GaussianField;
use super::scene::Scene;
use super::{ProjectorModel, SensorModel};
use crate::error::{Error, Result};
use crate::hdr::{HdrConfig, MultiFreqSet};
use crate::image::{FringeStack, Image, PhaseKind, PhaseMap, PointCloud};
use crate::stereo::AffineCamera;

/// Which camera of the rig.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum View {
    Left,
    Right,
}

impl View {
    pub fn name(self) -> &'static str {
        match self {
            View::Left => "left",
            View::Right => "right",
        }
    }

    fn index(self) -> u64 {
        match self {
            View::Left => 0,
            View::Right => 1,
        }
    }
}

/// Exact geometry behind one view.
#[derive(Debug, Clone)]
pub struct ViewTruth {
    /// Surface point imaged by every pixel, row-major.
    pub points: Vec<[f64; 3]>,
    /// Projector phase of the densest level at every pixel.
    pub phase: PhaseMap,
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub left: ViewTruth,
    pub right: ViewTruth,
    /// Surface point of every left pixel, with its pixel as provenance.
    pub cloud: PointCloud,
}

impl GroundTruth {
    pub fn view(&self, view: View) -> &ViewTruth {
        match view {
            View::Left => &self.left,
            View::Right => &self.right,
        }
    }
}

/// Output of the renderer.
#[derive(Debug, Clone)]
pub struct Rendered<T> {
    pub left: MultiFreqSet<T>,
    pub right: MultiFreqSet<T>,
    pub truth: GroundTruth,
}

impl<T> Rendered<T> {
    pub fn view(&self, view: View) -> &MultiFreqSet<T> {
        match view {
            View::Left => &self.left,
            View::Right => &self.right,
        }
    }
}

/// Renders both views as 8-bit fringe stacks: every sample is
/// `quantize(r I_0 (1 + α(per) cos(Φ + δ_n)) + noise)`.
///
/// The image size is read from the left camera's principal point, which
/// sits at the image centre: `width = 2 c_u + 1`, `height = 2 c_v + 1`.
pub fn render_stacks(
    scene: &Scene,
    proj: &ProjectorModel,
    sensor: &SensorModel,
    left: &AffineCamera,
    right: &AffineCamera,
    seed: u64,
) -> Result<Rendered<u8>> {
    render_with(
        scene,
        proj,
        sensor,
        left,
        right,
        seed,
        SensorModel::quantize,
    )
}

/// Like [`render_stacks`] but keeps full precision: samples are clipped to
/// the sensor range and never rounded.
pub fn render_stacks_f64(
    scene: &Scene,
    proj: &ProjectorModel,
    sensor: &SensorModel,
    left: &AffineCamera,
    right: &AffineCamera,
    seed: u64,
) -> Result<Rendered<f64>> {
    render_with(scene, proj, sensor, left, right, seed, SensorModel::clip)
}

fn render_with<T>(
    scene: &Scene,
    proj: &ProjectorModel,
    sensor: &SensorModel,
    left: &AffineCamera,
    right: &AffineCamera,
    seed: u64,
    output: impl Fn(f64) -> T + Sync,
) -> Result<Rendered<T>>
where
    T: crate::image::Intensity + Copy + Send + Sync,
{
    proj.validate()?;
    sensor.validate()?;
    let (w, h) = image_size(left);
    let noise = GaussianField::new(seed);
    let mut sets = Vec::with_capacity(2);
    let mut truths = Vec::with_capacity(2);
    for (view, cam) in [(View::Left, left), (View::Right, right)] {
        let points = cast_rays(scene, cam, w, h).map_err(|e| annotate(e, view))?;
        let reflect: Vec<f64> = points
            .iter()
            .map(|p| scene.reflectance(p[0], p[1]))
            .collect();
        let mut stacks = Vec::with_capacity(proj.levels());
        for level in 0..proj.levels() {
            let period = proj.periods[level];
            let shifts = proj.shifts(level);
            let samples = shifts
                .iter()
                .enumerate()
                .map(|(n, &delta)| {
                    let data: Vec<T> = (0..w * h)
                        .into_par_iter()
                        .map(|i| {
                            let phi = proj.phase_at(points[i][0], level);
                            let clean = proj.intensity_at(reflect[i], period, phi, delta);
                            let eps = if sensor.sigma > 0.0 {
                                sensor.sigma
                                    * noise.sample(&[
                                        view.index(),
                                        level as u64,
                                        n as u64,
                                        i as u64,
                                    ])
                            } else {
                                0.0
                            };
                            output(clean + eps)
                        })
                        .collect();
                    Image::new(w, h, data)
                })
                .collect::<Result<Vec<_>>>()?;
            stacks.push(FringeStack::new(samples, shifts, period)?);
        }
        sets.push(MultiFreqSet::from_stacks(stacks, &HdrConfig::default())?);
        let densest = proj.levels() - 1;
        let values = points
            .iter()
            .map(|p| proj.phase_at(p[0], densest))
            .collect();
        let phase = PhaseMap::new(w, h, values, vec![true; w * h], PhaseKind::Equivalent)?;
        truths.push(ViewTruth { points, phase });
    }
    let right_truth = truths.pop().unwrap();
    let left_truth = truths.pop().unwrap();
    let mut cloud = PointCloud::new(w, h);
    for (i, p) in left_truth.points.iter().enumerate() {
        cloud.push(*p, (i % w, i / w))?;
    }
    let right_set = sets.pop().unwrap();
    let left_set = sets.pop().unwrap();
    Ok(Rendered {
        left: left_set,
        right: right_set,
        truth: GroundTruth {
            left: left_truth,
            right: right_truth,
            cloud,
        },
    })
}

/// Image size implied by the principal point of a camera.
fn image_size(cam: &AffineCamera) -> (usize, usize) {
    let r = cam.rows();
    (
        (2.0 * r[0][3] + 1.0).round().max(1.0) as usize,
        (2.0 * r[1][3] + 1.0).round().max(1.0) as usize,
    )
}

fn annotate(e: Error, view: View) -> Error {
    match e {
        Error::OutsideFieldOfView(m) => {
            Error::OutsideFieldOfView(format!("{} camera: {m}", view.name()))
        }
        other => other,
    }
}

/// For every pixel, the first surface point along its viewing line when
/// coming from above.
fn cast_rays(scene: &Scene, cam: &AffineCamera, w: usize, h: usize) -> Result<Vec<[f64; 3]>> {
    let r = cam.rows();
    // x, y as affine functions of (u, v, z): invert the x/y block.
    let (a, b, c, d) = (r[0][0], r[0][1], r[1][0], r[1][1]);
    let det = a * d - b * c;
    if det.abs() < 1e-12 * (a.abs() + b.abs()) * (c.abs() + d.abs()) {
        return Err(Error::InvalidParameter(
            "camera views the scene edge-on; cannot image a height field".into(),
        ));
    }
    let line = move |u: f64, v: f64, z: f64| -> [f64; 3] {
        let ru = u - r[0][3] - r[0][2] * z;
        let rv = v - r[1][3] - r[1][2] * z;
        [(d * ru - b * rv) / det, (a * rv - c * ru) / det, z]
    };
    // Lateral travel per unit of depth along a viewing line.
    let slope = {
        let p0 = line(0.0, 0.0, 0.0);
        let p1 = line(0.0, 0.0, 1.0);
        (p1[0] - p0[0]).abs().max((p1[1] - p0[1]).abs()).max(1.0)
    };
    let (zmin, zmax) = scene.height_range();
    let margin = 1e-3 + 1e-6 * zmax.abs().max(zmin.abs());
    let (top, bottom) = (zmax + margin, zmin - margin);
    let spacing = scene.spacing();
    let step = 0.5 * spacing[0].min(spacing[1]) / slope;
    let steps = ((top - bottom) / step).ceil().max(1.0) as usize;
    let dz = (top - bottom) / steps as f64;

    (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (u, v) = ((i % w) as f64, (i / w) as f64);
            let gap = |z: f64| {
                let p = line(u, v, z);
                z - scene.height(p[0], p[1])
            };
            let mut hi = top;
            let mut lo = hi;
            for k in 1..=steps {
                lo = top - dz * k as f64;
                if gap(lo) <= 0.0 {
                    break;
                }
                hi = lo;
            }
            for _ in 0..200 {
                let mid = 0.5 * (hi + lo);
                if mid <= lo || mid >= hi {
                    break;
                }
                if gap(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let z = if gap(lo) == 0.0 { lo } else { 0.5 * (hi + lo) };
            let p = line(u, v, z);
            if !scene.contains(p[0], p[1]) {
                return Err(Error::OutsideFieldOfView(format!(
                    "pixel ({}, {}) sees ({:.4}, {:.4}) mm, outside the {:?} mm scene",
                    i % w,
                    i / w,
                    p[0],
                    p[1],
                    scene.extent()
                )));
            }
            Ok([p[0], p[1], scene.height(p[0], p[1])])
        })
        .collect()
}
