//! Pixel containers shared by every stage of the measurement chain.
//!
//! All rasters are row-major: pixel `(u, v)` lives at index `v * width + u`,
//! with `u` the column and `v` the row.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// A scalar camera sample that can be read as a real intensity.
///
/// Captured fringes are `u8`; real-valued stacks are used for noiseless
/// closure checks where quantization would mask the algebra.
pub trait Intensity: Copy + Send + Sync + 'static {
    fn value(self) -> f64;
}

impl Intensity for u8 {
    #[inline]
    fn value(self) -> f64 {
        f64::from(self)
    }
}

impl Intensity for f32 {
    #[inline]
    fn value(self) -> f64 {
        f64::from(self)
    }
}

impl Intensity for f64 {
    #[inline]
    fn value(self) -> f64 {
        self
    }
}

/// A single-channel raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> Image<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::LengthMismatch {
                what: "image data",
                expected: width * height,
                found: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> T {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: T) {
        self.data[v * self.width + u] = value;
    }

    pub fn row(&self, v: usize) -> &[T] {
        &self.data[v * self.width..(v + 1) * self.width]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }
}

/// A phase-shifted fringe sequence captured at one fringe period.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeStack<T = u8> {
    width: usize,
    height: usize,
    shifts: Vec<f64>,
    period: f64,
    samples: Vec<Image<T>>,
}

impl<T: Intensity> FringeStack<T> {
    /// Validates and assembles a stack. `shifts[n]` is the reference phase
    /// of `samples[n]`; `period` is in projector pixels.
    pub fn new(samples: Vec<Image<T>>, shifts: Vec<f64>, period: f64) -> Result<Self> {
        if samples.len() < 3 {
            return Err(Error::InsufficientSamples {
                found: samples.len(),
            });
        }
        if shifts.len() != samples.len() {
            return Err(Error::LengthMismatch {
                what: "shift list",
                expected: samples.len(),
                found: shifts.len(),
            });
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "fringe period must be positive, got {period}"
            )));
        }
        if let Some(bad) = shifts.iter().find(|d| !d.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite shift {bad}")));
        }
        let (width, height) = (samples[0].width(), samples[0].height());
        for img in &samples[1..] {
            if img.width() != width || img.height() != height {
                return Err(Error::DimensionMismatch {
                    expected_width: width,
                    expected_height: height,
                    width: img.width(),
                    height: img.height(),
                });
            }
        }
        Ok(Self {
            width,
            height,
            shifts,
            period,
            samples,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn shifts(&self) -> &[f64] {
        &self.shifts
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn samples(&self) -> &[Image<T>] {
        &self.samples
    }

    /// Writes the temporal intensity sequence of pixel `(u, v)` into `out`.
    pub fn pixel_into(&self, u: usize, v: usize, out: &mut Vec<f64>) {
        out.clear();
        let idx = v * self.width + u;
        out.extend(self.samples.iter().map(|img| img.data[idx].value()));
    }
}

/// Per-pixel count of samples at or above the saturation threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaturationMap {
    counts: Image<u32>,
    steps: usize,
}

impl SaturationMap {
    pub fn new(counts: Image<u32>, steps: usize) -> Result<Self> {
        if let Some(&c) = counts.data().iter().find(|&&c| c as usize > steps) {
            return Err(Error::InvalidParameter(format!(
                "saturation count {c} exceeds stack length {steps}"
            )));
        }
        Ok(Self { counts, steps })
    }

    pub fn width(&self) -> usize {
        self.counts.width()
    }

    pub fn height(&self) -> usize {
        self.counts.height()
    }

    /// Number of samples in the stack the map was computed from.
    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u32 {
        self.counts.get(u, v)
    }

    pub fn counts(&self) -> &Image<u32> {
        &self.counts
    }

    /// Pixels left with fewer than three unsaturated samples.
    pub fn oversaturated(&self) -> IndexMap {
        let limit = self.steps.saturating_sub(3) as u32;
        IndexMap::from_fn(self.width(), self.height(), |u, v| self.get(u, v) > limit)
    }
}

/// What a phase map's values mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseKind {
    /// Modulo 2π, canonical interval (−π, π].
    Wrapped,
    /// Absolute phase on the level's own scale.
    Unwrapped,
    /// Absolute phase rescaled to the densest level's scale.
    Equivalent,
}

/// A real phase raster with a validity mask.
///
/// Invalid pixels always hold NaN so that a stray read cannot masquerade as
/// a measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
    kind: PhaseKind,
}

impl PhaseMap {
    /// Builds a map from explicit buffers. Values at invalid pixels are
    /// replaced by NaN; valid values must be finite, and within (−π, π] for
    /// wrapped maps.
    pub fn new(
        width: usize,
        height: usize,
        mut values: Vec<f64>,
        valid: Vec<bool>,
        kind: PhaseKind,
    ) -> Result<Self> {
        let n = width * height;
        if values.len() != n {
            return Err(Error::LengthMismatch {
                what: "phase values",
                expected: n,
                found: values.len(),
            });
        }
        if valid.len() != n {
            return Err(Error::LengthMismatch {
                what: "validity mask",
                expected: n,
                found: valid.len(),
            });
        }
        for (value, &ok) in values.iter_mut().zip(&valid) {
            if !ok {
                *value = f64::NAN;
                continue;
            }
            if !value.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "valid phase pixel holds non-finite value {value}"
                )));
            }
            if kind == PhaseKind::Wrapped && !(*value > -PI && *value <= PI) {
                return Err(Error::InvalidParameter(format!(
                    "wrapped phase {value} outside (-pi, pi]"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            values,
            valid,
            kind,
        })
    }

    /// Builds a map from a per-pixel closure; `None` marks the pixel invalid.
    pub fn from_fn(
        width: usize,
        height: usize,
        kind: PhaseKind,
        mut f: impl FnMut(usize, usize) -> Option<f64>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        let mut valid = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                match f(u, v) {
                    Some(p) => {
                        values.push(p);
                        valid.push(true);
                    }
                    None => {
                        values.push(f64::NAN);
                        valid.push(false);
                    }
                }
            }
        }
        Self::new(width, height, values, valid, kind)
    }

    /// Builds a map whose invalid pixels are exactly the non-finite values.
    pub fn from_values(
        width: usize,
        height: usize,
        values: Vec<f64>,
        kind: PhaseKind,
    ) -> Result<Self> {
        let valid = values.iter().map(|v| v.is_finite()).collect();
        Self::new(width, height, values, valid, kind)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn kind(&self) -> PhaseKind {
        self.kind
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        let idx = v * self.width + u;
        self.valid[idx].then(|| self.values[idx])
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.valid[v * self.width + u]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn row_values(&self, v: usize) -> &[f64] {
        &self.values[v * self.width..(v + 1) * self.width]
    }

    pub fn row_valid(&self, v: usize) -> &[bool] {
        &self.valid[v * self.width..(v + 1) * self.width]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    pub fn valid_fraction(&self) -> f64 {
        if self.valid.is_empty() {
            return 0.0;
        }
        self.valid_count() as f64 / self.valid.len() as f64
    }

    /// Returns a copy with every valid value multiplied by `factor`.
    pub fn scaled(&self, factor: f64, kind: PhaseKind) -> Result<Self> {
        let values = self
            .values
            .iter()
            .zip(&self.valid)
            .map(|(&p, &ok)| if ok { p * factor } else { f64::NAN })
            .collect();
        Self::new(self.width, self.height, values, self.valid.clone(), kind)
    }

    pub fn same_shape(&self, other: &PhaseMap) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// A per-pixel boolean flag map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMap {
    width: usize,
    height: usize,
    flags: Vec<bool>,
}

impl IndexMap {
    pub fn new(width: usize, height: usize, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != width * height {
            return Err(Error::LengthMismatch {
                what: "index map",
                expected: width * height,
                found: flags.len(),
            });
        }
        Ok(Self {
            width,
            height,
            flags,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut flags = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                flags.push(f(u, v));
            }
        }
        Self {
            width,
            height,
            flags,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.flags[v * self.width + u]
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&b| b).count()
    }

    /// Unary complement.
    pub fn not(&self) -> IndexMap {
        IndexMap {
            width: self.width,
            height: self.height,
            flags: self.flags.iter().map(|b| !b).collect(),
        }
    }

    pub fn and(&self, other: &IndexMap) -> IndexMap {
        debug_assert_eq!(self.flags.len(), other.flags.len());
        IndexMap {
            width: self.width,
            height: self.height,
            flags: self
                .flags
                .iter()
                .zip(&other.flags)
                .map(|(a, b)| *a && *b)
                .collect(),
        }
    }
}

/// Metric 3D points with the left-camera pixel each one came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    image_width: usize,
    image_height: usize,
    points: Vec<[f64; 3]>,
    provenance: Vec<(usize, usize)>,
}

impl PointCloud {
    /// An empty cloud whose provenance refers to a `width`×`height` left image.
    pub fn new(image_width: usize, image_height: usize) -> Self {
        Self {
            image_width,
            image_height,
            points: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn push(&mut self, point: [f64; 3], pixel: (usize, usize)) -> Result<()> {
        if !point.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite point {point:?}"
            )));
        }
        if pixel.0 >= self.image_width || pixel.1 >= self.image_height {
            return Err(Error::InvalidParameter(format!(
                "provenance pixel {pixel:?} outside {}x{} image",
                self.image_width, self.image_height
            )));
        }
        self.points.push(point);
        self.provenance.push(pixel);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn provenance(&self) -> &[(usize, usize)] {
        &self.provenance
    }

    pub fn image_size(&self) -> (usize, usize) {
        (self.image_width, self.image_height)
    }
}

/// Maps any angle onto the canonical wrapped interval (−π, π].
#[inline]
pub fn wrap_phase(phase: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut w = phase - two_pi * (phase / two_pi).round();
    if w <= -PI {
        w += two_pi;
    } else if w > PI {
        w -= two_pi;
    }
    w
}
