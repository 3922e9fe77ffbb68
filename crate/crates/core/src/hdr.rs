//! Saturation-tolerant phase retrieval and multi-frequency fusion.
//!
//! The chain for one camera view is:
//!
//! 1. [`sat_map`] counts, per pixel, the samples at or above the saturation
//!    threshold.
//! 2. [`gen_phase_shifting`] retrieves the wrapped phase from the surviving
//!    samples only. Unsaturated pixels take the closed-form standard path;
//!    partially saturated ones drop the clipped samples together with their
//!    shifts and run the least-squares solve on what remains. Fewer than three
//!    survivors leaves the pixel invalid.
//! 3. [`temporal_unwrap`] resolves fringe orders level by level, from the
//!    loosest (single-fringe, already absolute) period to the densest.
//! 4. [`multi_freq_hdr`] rescales every level to the densest phase scale and
//!    fills pixels that are over-saturated at dense levels from the densest
//!    looser level that still has a valid phase.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{FringeStack, Image, IndexMap, Intensity, PhaseKind, PhaseMap, SaturationMap};
use crate::phase::{coefficients_for, solve_with, standard_with, CoefficientMatrix, ShiftSchedule};

/// Minimum number of unsaturated samples needed to fit a sinusoid.
pub const MIN_VALID_SAMPLES: usize = 3;

/// Saturation handling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct HdrConfig {
    sat_thr: u8,
}

impl Default for HdrConfig {
    fn default() -> Self {
        Self { sat_thr: 255 }
    }
}

impl HdrConfig {
    /// `sat_thr` is the intensity, in counts, from which a sample counts as
    /// saturated (`sample >= sat_thr`).
    pub fn new(sat_thr: u8) -> Result<Self> {
        if sat_thr == 0 {
            return Err(Error::InvalidParameter(
                "saturation threshold must be at least 1".into(),
            ));
        }
        Ok(Self { sat_thr })
    }

    pub fn sat_thr(&self) -> u8 {
        self.sat_thr
    }

    pub fn min_valid(&self) -> usize {
        MIN_VALID_SAMPLES
    }

    #[inline]
    fn is_saturated(&self, sample: f64) -> bool {
        sample >= f64::from(self.sat_thr)
    }
}

/// Counts saturated samples at every pixel.
pub fn sat_map<T: Intensity>(stack: &FringeStack<T>, config: &HdrConfig) -> SaturationMap {
    let (w, h) = (stack.width(), stack.height());
    let mut counts = vec![0u32; w * h];
    counts.par_chunks_mut(w).enumerate().for_each(|(v, row)| {
        for img in stack.samples() {
            for (c, s) in row.iter_mut().zip(img.row(v)) {
                if config.is_saturated(s.value()) {
                    *c += 1;
                }
            }
        }
    });
    let counts = Image::new(w, h, counts).expect("buffer sized from stack");
    SaturationMap::new(counts, stack.len()).expect("counts bounded by stack length")
}

/// Per-level solver state shared by all pixels of one stack.
#[derive(Debug, Clone)]
pub struct LevelSolver {
    schedule: ShiftSchedule,
    uniform: bool,
    full: Result<CoefficientMatrix, f64>,
}

impl LevelSolver {
    pub fn new(schedule: ShiftSchedule) -> Self {
        let uniform = schedule.is_uniform();
        let full = coefficients_for(schedule.deltas()).map_err(|e| match e {
            Error::DegenerateSchedule { condition } => condition,
            _ => f64::INFINITY,
        });
        Self {
            schedule,
            uniform,
            full,
        }
    }

    pub fn schedule(&self) -> &ShiftSchedule {
        &self.schedule
    }

    /// Phase from all samples: the closed form on a uniform schedule, the
    /// least-squares solve otherwise.
    pub fn solve_all(&self, samples: &[f64]) -> Option<f64> {
        if self.uniform {
            standard_with(samples, self.schedule.deltas()).ok()
        } else {
            let c = self.full.as_ref().ok()?;
            solve_with(samples, self.schedule.deltas(), c).ok()
        }
    }
}

/// Retrieves the wrapped phase of one pixel from its sample sequence,
/// ignoring every sample at or above the threshold.
///
/// Returns `None` when fewer than three samples survive, when the surviving
/// shifts are degenerate, or when the survivors carry no modulation.
pub fn retrieve_pixel(samples: &[f64], solver: &LevelSolver, config: &HdrConfig) -> Option<f64> {
    let mut cache = CoeffCache::default();
    retrieve_cached(samples, solver, config, &mut cache)
}

#[derive(Default)]
struct CoeffCache {
    by_mask: HashMap<u64, Option<CoefficientMatrix>>,
}

fn retrieve_cached(
    samples: &[f64],
    solver: &LevelSolver,
    config: &HdrConfig,
    cache: &mut CoeffCache,
) -> Option<f64> {
    let saturated = samples.iter().filter(|&&s| config.is_saturated(s)).count();
    if saturated == 0 {
        return solver.solve_all(samples);
    }
    if samples.len() - saturated < MIN_VALID_SAMPLES {
        return None;
    }
    let deltas = solver.schedule.deltas();
    let mut kept_i = Vec::with_capacity(samples.len() - saturated);
    let mut kept_d = Vec::with_capacity(samples.len() - saturated);
    let mut mask = 0u64;
    for (n, (&s, &d)) in samples.iter().zip(deltas).enumerate() {
        if !config.is_saturated(s) {
            kept_i.push(s);
            kept_d.push(d);
            if n < 64 {
                mask |= 1 << n;
            }
        }
    }
    let coeffs = if samples.len() <= 64 {
        *cache
            .by_mask
            .entry(mask)
            .or_insert_with(|| coefficients_for(&kept_d).ok())
    } else {
        coefficients_for(&kept_d).ok()
    };
    solve_with(&kept_i, &kept_d, &coeffs?).ok()
}

fn check_same_shape(w: usize, h: usize, w2: usize, h2: usize) -> Result<()> {
    if w != w2 || h != h2 {
        return Err(Error::DimensionMismatch {
            expected_width: w,
            expected_height: h,
            width: w2,
            height: h2,
        });
    }
    Ok(())
}

/// Saturation-tolerant wrapped phase for a whole stack.
///
/// `satmap` must have been computed from `stack` with the same config; it
/// selects the standard fast path for pixels without any saturated sample.
pub fn gen_phase_shifting<T: Intensity>(
    stack: &FringeStack<T>,
    satmap: &SaturationMap,
    config: &HdrConfig,
) -> Result<PhaseMap> {
    let (w, h) = (stack.width(), stack.height());
    check_same_shape(w, h, satmap.width(), satmap.height())?;
    let solver = LevelSolver::new(ShiftSchedule::new(stack.shifts().to_vec())?);
    let values = per_pixel_rows(stack, |u, v, samples, cache| {
        if satmap.get(u, v) == 0 {
            solver.solve_all(samples)
        } else {
            retrieve_cached(samples, &solver, config, cache)
        }
    });
    PhaseMap::from_values(w, h, values, PhaseKind::Wrapped)
}

/// Wrapped phase from every sample, saturated or not: the conventional
/// processing that saturation-tolerant retrieval is compared against.
pub fn naive_phase_shifting<T: Intensity>(stack: &FringeStack<T>) -> Result<PhaseMap> {
    let solver = LevelSolver::new(ShiftSchedule::new(stack.shifts().to_vec())?);
    let values = per_pixel_rows(stack, |_, _, samples, _| solver.solve_all(samples));
    PhaseMap::from_values(stack.width(), stack.height(), values, PhaseKind::Wrapped)
}

fn per_pixel_rows<T, F>(stack: &FringeStack<T>, f: F) -> Vec<f64>
where
    T: Intensity,
    F: Fn(usize, usize, &[f64], &mut CoeffCache) -> Option<f64> + Sync,
{
    let (w, h) = (stack.width(), stack.height());
    let mut values = vec![f64::NAN; w * h];
    values.par_chunks_mut(w).enumerate().for_each(|(v, row)| {
        let mut buf = Vec::with_capacity(stack.len());
        let mut cache = CoeffCache::default();
        for (u, out) in row.iter_mut().enumerate() {
            stack.pixel_into(u, v, &mut buf);
            *out = f(u, v, &buf, &mut cache).unwrap_or(f64::NAN);
        }
    });
    debug_assert_eq!(values.len(), w * h);
    values
}

/// Round half away from zero.
#[inline]
fn round_half_away(x: f64) -> f64 {
    x.round()
}

/// Fringe order that lifts `wrapped` onto the reference `coarse` phase
/// expressed at the finer scale.
#[inline]
pub fn fringe_order(coarse: f64, coarse_period: f64, fine_period: f64, wrapped: f64) -> f64 {
    round_half_away((coarse * coarse_period / fine_period - wrapped) / (2.0 * std::f64::consts::PI))
}

fn check_levels(levels: &[PhaseMap], periods: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one level is required".into(),
        ));
    }
    if levels.len() != periods.len() {
        return Err(Error::LengthMismatch {
            what: "period list",
            expected: levels.len(),
            found: periods.len(),
        });
    }
    if let Some(p) = periods.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "period must be positive, got {p}"
        )));
    }
    if periods.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter(format!(
            "periods must strictly decrease from loosest to densest, got {periods:?}"
        )));
    }
    let (w, h) = (levels[0].width(), levels[0].height());
    for l in &levels[1..] {
        check_same_shape(w, h, l.width(), l.height())?;
    }
    Ok(())
}

/// Hierarchical temporal unwrapping.
///
/// `levels[0]` must be absolute already (its fringe spans the field), so it
/// is passed through. Each later level takes the fringe order that best
/// matches the previous unwrapped level rescaled by the period ratio. A pixel
/// stays valid at level `m` only if it is valid in the wrapped map at `m` and
/// in the unwrapped map at `m - 1`.
pub fn temporal_unwrap(levels: &[PhaseMap], periods: &[f64]) -> Result<Vec<PhaseMap>> {
    check_levels(levels, periods)?;
    let (w, h) = (levels[0].width(), levels[0].height());
    let mut out = Vec::with_capacity(levels.len());
    out.push(PhaseMap::new(
        w,
        h,
        levels[0].values().to_vec(),
        levels[0].valid().to_vec(),
        PhaseKind::Unwrapped,
    )?);
    for m in 1..levels.len() {
        let prev = &out[m - 1];
        let cur = &levels[m];
        let values: Vec<f64> = prev
            .values()
            .par_iter()
            .zip(prev.valid().par_iter())
            .zip(cur.values().par_iter().zip(cur.valid().par_iter()))
            .map(|((&coarse, &ok_prev), (&phi, &ok_cur))| {
                if ok_prev && ok_cur {
                    let k = fringe_order(coarse, periods[m - 1], periods[m], phi);
                    phi + 2.0 * std::f64::consts::PI * k
                } else {
                    f64::NAN
                }
            })
            .collect();
        out.push(PhaseMap::from_values(w, h, values, PhaseKind::Unwrapped)?);
    }
    Ok(out)
}

/// Fringe stacks of one view, ordered from the loosest to the densest period,
/// each with its saturation map.
#[derive(Debug, Clone)]
pub struct MultiFreqSet<T = u8> {
    levels: Vec<(FringeStack<T>, SaturationMap)>,
}

impl<T: Intensity> MultiFreqSet<T> {
    pub fn new(levels: Vec<(FringeStack<T>, SaturationMap)>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one level is required".into(),
            ));
        }
        let periods: Vec<f64> = levels.iter().map(|(s, _)| s.period()).collect();
        if periods.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter(format!(
                "periods must strictly decrease from loosest to densest, got {periods:?}"
            )));
        }
        let (w, h) = (levels[0].0.width(), levels[0].0.height());
        for (stack, sat) in &levels {
            check_same_shape(w, h, stack.width(), stack.height())?;
            check_same_shape(w, h, sat.width(), sat.height())?;
            if sat.steps() != stack.len() {
                return Err(Error::LengthMismatch {
                    what: "saturation map steps",
                    expected: stack.len(),
                    found: sat.steps(),
                });
            }
        }
        Ok(Self { levels })
    }

    /// Computes saturation maps for `stacks` and assembles the set.
    pub fn from_stacks(stacks: Vec<FringeStack<T>>, config: &HdrConfig) -> Result<Self> {
        let levels = stacks
            .into_iter()
            .map(|s| {
                let m = sat_map(&s, config);
                (s, m)
            })
            .collect();
        Self::new(levels)
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[(FringeStack<T>, SaturationMap)] {
        &self.levels
    }

    pub fn periods(&self) -> Vec<f64> {
        self.levels.iter().map(|(s, _)| s.period()).collect()
    }

    pub fn saturation_maps(&self) -> Vec<SaturationMap> {
        self.levels.iter().map(|(_, m)| m.clone()).collect()
    }

    /// Saturation-tolerant wrapped phase of every level.
    pub fn wrapped_phases(&self, config: &HdrConfig) -> Result<Vec<PhaseMap>> {
        self.levels
            .iter()
            .map(|(s, m)| gen_phase_shifting(s, m, config))
            .collect()
    }
}

/// Tallies of where each fused pixel came from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FusionReport {
    /// Total pixel count.
    pub pixels: usize,
    /// Per level (loosest first): pixels flagged over-saturated.
    pub oversaturated: Vec<usize>,
    /// Per level: pixels whose replacement mask selects that level.
    pub selected: Vec<usize>,
    /// Per level: output pixels actually taken from that level. The last
    /// entry counts pixels kept at the densest level.
    pub filled_from: Vec<usize>,
    /// Pixels over-saturated at every level.
    pub all_levels_oversaturated: usize,
    /// Pixels without a valid phase at any level.
    pub unrecoverable: usize,
    /// Pixels invalid in the densest unwrapped level.
    pub densest_invalid: usize,
}

impl FusionReport {
    /// Pixels taken from a looser level than the densest.
    pub fn replaced(&self) -> usize {
        let n = self.filled_from.len();
        self.filled_from[..n.saturating_sub(1)].iter().sum()
    }

    pub fn valid(&self) -> usize {
        self.filled_from.iter().sum()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let pct = |n: usize| 100.0 * n as f64 / self.pixels.max(1) as f64;
        s.push_str(&format!("fusion report: {} pixels\n", self.pixels));
        let m = self.filled_from.len();
        for i in 0..m {
            s.push_str(&format!(
                "  level {}: over-saturated {:>8} ({:6.2}%), selected {:>8}, filled {:>8} ({:6.2}%)\n",
                i + 1,
                self.oversaturated[i],
                pct(self.oversaturated[i]),
                self.selected[i],
                self.filled_from[i],
                pct(self.filled_from[i]),
            ));
        }
        s.push_str(&format!(
            "  replaced from looser levels: {} ({:.2}%)\n",
            self.replaced(),
            pct(self.replaced())
        ));
        s.push_str(&format!(
            "  invalid at densest level:   {} ({:.2}%)\n",
            self.densest_invalid,
            pct(self.densest_invalid)
        ));
        s.push_str(&format!(
            "  over-saturated everywhere:  {}\n  unrecoverable:              {} ({:.2}%)\n",
            self.all_levels_oversaturated,
            self.unrecoverable,
            pct(self.unrecoverable)
        ));
        s
    }

    /// One `key=value` pair per line; list values are comma separated.
    pub fn to_key_value(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        format!(
            "pixels={}\nlevels={}\noversaturated={}\nselected={}\nfilled_from={}\nreplaced={}\ndensest_invalid={}\nall_levels_oversaturated={}\nunrecoverable={}\n",
            self.pixels,
            self.filled_from.len(),
            join(&self.oversaturated),
            join(&self.selected),
            join(&self.filled_from),
            self.replaced(),
            self.densest_invalid,
            self.all_levels_oversaturated,
            self.unrecoverable,
        )
    }

    pub fn from_key_value(text: &str) -> Result<Self> {
        let mut kv = HashMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("bad report line {line:?}")))?;
            kv.insert(k.trim(), v.trim());
        }
        let get = |k: &str| {
            kv.get(k)
                .copied()
                .ok_or_else(|| Error::InvalidParameter(format!("report lacks {k}")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad number for {k}")))
        };
        let list = |k: &str| -> Result<Vec<usize>> {
            let v = get(k)?;
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',')
                .map(|x| {
                    x.parse()
                        .map_err(|_| Error::InvalidParameter(format!("bad list for {k}")))
                })
                .collect()
        };
        Ok(Self {
            pixels: num("pixels")?,
            oversaturated: list("oversaturated")?,
            selected: list("selected")?,
            filled_from: list("filled_from")?,
            all_levels_oversaturated: num("all_levels_oversaturated")?,
            unrecoverable: num("unrecoverable")?,
            densest_invalid: num("densest_invalid")?,
        })
    }
}

/// Result of multi-frequency fusion for one view.
#[derive(Debug, Clone)]
pub struct FusedPhase {
    /// Absolute phase on the densest level's scale.
    pub phase: PhaseMap,
    /// Per pixel: 1-based level the value came from, 0 when invalid.
    pub source: Image<u8>,
    /// Every level unwrapped on its own scale.
    pub unwrapped: Vec<PhaseMap>,
    pub report: FusionReport,
}

/// Replacement masks: `result[m]` flags pixels over-saturated at every level
/// denser than `m` but not at `m` itself. Together with the pixels
/// over-saturated everywhere they partition the image.
pub fn replacement_masks(oversaturated: &[IndexMap]) -> Vec<IndexMap> {
    let m = oversaturated.len();
    let mut out = Vec::with_capacity(m);
    for level in 0..m {
        let mut mask = oversaturated[level].not();
        for denser in &oversaturated[level + 1..] {
            mask = mask.and(denser);
        }
        out.push(mask);
    }
    out
}

/// Fuses wrapped phases of one view into a single densest-scale phase map.
pub fn multi_freq_hdr<T: Intensity>(
    set: &MultiFreqSet<T>,
    wrapped: &[PhaseMap],
    config: &HdrConfig,
) -> Result<FusedPhase> {
    let steps: Vec<usize> = set.levels().iter().map(|(s, _)| s.len()).collect();
    fuse_levels(
        &set.saturation_maps(),
        &steps,
        &set.periods(),
        wrapped,
        config,
    )
}

/// [`multi_freq_hdr`] on saturation maps and periods alone, for callers that
/// no longer hold the fringe stacks.
pub fn fuse_levels(
    satmaps: &[SaturationMap],
    steps: &[usize],
    periods: &[f64],
    wrapped: &[PhaseMap],
    config: &HdrConfig,
) -> Result<FusedPhase> {
    check_levels(wrapped, periods)?;
    if satmaps.len() != wrapped.len() || steps.len() != wrapped.len() {
        return Err(Error::LengthMismatch {
            what: "saturation maps",
            expected: wrapped.len(),
            found: satmaps.len().min(steps.len()),
        });
    }
    let (w, h) = (wrapped[0].width(), wrapped[0].height());
    for s in satmaps {
        check_same_shape(w, h, s.width(), s.height())?;
    }
    let unwrapped = temporal_unwrap(wrapped, periods)?;
    let levels = wrapped.len();
    let densest = periods[levels - 1];

    let ind: Vec<IndexMap> = satmaps
        .iter()
        .zip(steps)
        .map(|(s, &n)| {
            let limit = n.saturating_sub(config.min_valid()) as u32;
            IndexMap::from_fn(w, h, |u, v| s.get(u, v) > limit)
        })
        .collect();
    let rep = replacement_masks(&ind);

    let mut values = vec![f64::NAN; w * h];
    let mut source = vec![0u8; w * h];
    let mut report = FusionReport {
        pixels: w * h,
        oversaturated: ind.iter().map(IndexMap::count).collect(),
        selected: rep.iter().map(IndexMap::count).collect(),
        filled_from: vec![0; levels],
        ..Default::default()
    };
    for idx in 0..w * h {
        if !unwrapped[levels - 1].valid()[idx] {
            report.densest_invalid += 1;
        }
        let start = (0..levels).rev().find(|&m| rep[m].flags()[idx]);
        let Some(start) = start else {
            report.all_levels_oversaturated += 1;
            report.unrecoverable += 1;
            continue;
        };
        // densest-first search; a broken unwrapping chain falls back to looser levels
        match (0..=start).rev().find(|&m| unwrapped[m].valid()[idx]) {
            Some(m) => {
                values[idx] = unwrapped[m].values()[idx] * periods[m] / densest;
                source[idx] = (m + 1) as u8;
                report.filled_from[m] += 1;
            }
            None => report.unrecoverable += 1,
        }
    }
    Ok(FusedPhase {
        phase: PhaseMap::from_values(w, h, values, PhaseKind::Equivalent)?,
        source: Image::new(w, h, source)?,
        unwrapped,
        report,
    })
}

/// Conventional multi-frequency result: the densest unwrapped level only,
/// with no replacement.
pub fn densest_only(wrapped: &[PhaseMap], periods: &[f64]) -> Result<PhaseMap> {
    let mut unwrapped = temporal_unwrap(wrapped, periods)?;
    let last = unwrapped.pop().expect("at least one level");
    let (w, h) = (last.width(), last.height());
    PhaseMap::new(
        w,
        h,
        last.values().to_vec(),
        last.valid().to_vec(),
        PhaseKind::Equivalent,
    )
}
