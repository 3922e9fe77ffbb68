//! Error statistics of phase maps against ground truth, and the ripple
//! spectrum that separates naive from saturation-tolerant processing.

use std::fmt::Write as _;

use hdr_fringe::{Error, PhaseMap, Result};

/// Options of [`compare_maps`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareOptions {
    /// Highest harmonic of the truth phase to analyse.
    pub harmonics: usize,
    /// Half-width of the error histogram, rad.
    pub hist_range: f64,
    pub hist_bins: usize,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            harmonics: 48,
            hist_range: 0.25,
            hist_bins: 20,
        }
    }
}

/// Equal-width histogram on `[-range, range)` with outlier tallies.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub range: f64,
    pub bins: Vec<usize>,
    pub below: usize,
    pub above: usize,
}

impl Histogram {
    pub fn new(range: f64, bins: usize, values: impl IntoIterator<Item = f64>) -> Self {
        let mut h = Self {
            range,
            bins: vec![0; bins],
            below: 0,
            above: 0,
        };
        let width = 2.0 * range / bins as f64;
        for x in values {
            if x < -range {
                h.below += 1;
            } else if x >= range {
                h.above += 1;
            } else {
                let i = (((x + range) / width) as usize).min(bins - 1);
                h.bins[i] += 1;
            }
        }
        h
    }

    pub fn total(&self) -> usize {
        self.bins.iter().sum::<usize>() + self.below + self.above
    }
}

/// Error statistics of one map.
#[derive(Debug, Clone, PartialEq)]
pub struct MapStats {
    pub valid_fraction: f64,
    /// Pixels valid in both the map and the truth.
    pub compared: usize,
    pub rms: f64,
    pub histogram: Histogram,
}

/// Amplitude of the error at one harmonic of the truth phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub k: usize,
    pub naive: f64,
    pub fused: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub fused: MapStats,
    pub naive: MapStats,
    /// Pixels valid in all three maps where fused and naive differ.
    pub ripple_region: usize,
    pub spectrum: Vec<Harmonic>,
}

impl Comparison {
    /// Harmonic where the naive error is strongest.
    pub fn naive_peak(&self) -> Option<Harmonic> {
        self.spectrum
            .iter()
            .copied()
            .fold(None, |best: Option<Harmonic>, h| match best {
                Some(b) if b.naive >= h.naive => Some(b),
                _ => Some(h),
            })
    }

    pub fn harmonic(&self, k: usize) -> Option<Harmonic> {
        self.spectrum.iter().copied().find(|h| h.k == k)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, m) in [("fused", &self.fused), ("naive", &self.naive)] {
            let _ = writeln!(
                s,
                "{name}: valid {:.4}%, rms error {:.6} rad over {} pixels",
                100.0 * m.valid_fraction,
                m.rms,
                m.compared
            );
            let h = &m.histogram;
            let width = 2.0 * h.range / h.bins.len() as f64;
            let _ = writeln!(s, "  error < {:+.4}: {}", -h.range, h.below);
            for (i, c) in h.bins.iter().enumerate() {
                let lo = -h.range + width * i as f64;
                let _ = writeln!(s, "  [{:+.4}, {:+.4}): {}", lo, lo + width, c);
            }
            let _ = writeln!(s, "  error >= {:+.4}: {}", h.range, h.above);
        }
        let _ = writeln!(s, "ripple region: {} pixels", self.ripple_region);
        if let Some(p) = self.naive_peak() {
            let _ = writeln!(
                s,
                "naive ripple peak at harmonic {}: naive {:.6} rad, fused {:.6} rad",
                p.k, p.naive, p.fused
            );
        }
        s
    }

    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (name, m) in [("fused", &self.fused), ("naive", &self.naive)] {
            let _ = writeln!(s, "{name}_valid_fraction={:?}", m.valid_fraction);
            let _ = writeln!(s, "{name}_compared={}", m.compared);
            let _ = writeln!(s, "{name}_rms={:?}", m.rms);
            let bins: Vec<String> = m.histogram.bins.iter().map(usize::to_string).collect();
            let _ = writeln!(
                s,
                "{name}_histogram={} {} {}",
                m.histogram.below,
                bins.join(","),
                m.histogram.above
            );
        }
        let _ = writeln!(s, "ripple_region={}", self.ripple_region);
        for h in &self.spectrum {
            let _ = writeln!(s, "harmonic_{}={:?} {:?}", h.k, h.naive, h.fused);
        }
        if let Some(p) = self.naive_peak() {
            let _ = writeln!(s, "naive_peak_harmonic={}", p.k);
        }
        s
    }
}

fn check_shape(a: &PhaseMap, b: &PhaseMap) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected_width: a.width(),
            expected_height: a.height(),
            width: b.width(),
            height: b.height(),
        })
    }
}

/// Per-pixel error `map - truth` where both are valid, `None` elsewhere.
pub fn error_image(map: &PhaseMap, truth: &PhaseMap) -> Result<Vec<Option<f64>>> {
    check_shape(truth, map)?;
    Ok(map
        .values()
        .iter()
        .zip(map.valid())
        .zip(truth.values().iter().zip(truth.valid()))
        .map(|((&v, &ok), (&t, &tok))| (ok && tok).then_some(v - t))
        .collect())
}

fn stats(map: &PhaseMap, errors: &[Option<f64>], opts: &CompareOptions) -> MapStats {
    let valid: Vec<f64> = errors.iter().flatten().copied().collect();
    let rms = if valid.is_empty() {
        0.0
    } else {
        (valid.iter().map(|e| e * e).sum::<f64>() / valid.len() as f64).sqrt()
    };
    MapStats {
        valid_fraction: map.valid_fraction(),
        compared: valid.len(),
        rms,
        histogram: Histogram::new(opts.hist_range, opts.hist_bins, valid.iter().copied()),
    }
}

/// Amplitude of the component of `error` that oscillates as `cos(kΦ + c)`
/// over the selected pixels, where `Φ` is the truth phase.
pub fn harmonic_amplitude(error: &[f64], phase: &[f64], mask: &[bool], k: usize) -> f64 {
    let (mut re, mut im, mut n) = (0.0, 0.0, 0usize);
    for ((&e, &p), _) in error.iter().zip(phase).zip(mask).filter(|(_, &m)| m) {
        let (s, c) = (k as f64 * p).sin_cos();
        re += e * c;
        im += e * s;
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    2.0 * re.hypot(im) / n as f64
}

/// Compares a saturation-tolerant and a naive phase map against the truth.
/// All three maps are on the densest level's phase scale.
pub fn compare_maps(
    fused: &PhaseMap,
    naive: &PhaseMap,
    truth: &PhaseMap,
    opts: &CompareOptions,
) -> Result<Comparison> {
    check_shape(fused, naive)?;
    let ef = error_image(fused, truth)?;
    let en = error_image(naive, truth)?;
    let mask: Vec<bool> = ef
        .iter()
        .zip(&en)
        .map(|(a, b)| matches!((a, b), (Some(x), Some(y)) if x.to_bits() != y.to_bits()))
        .collect();
    let flat = |e: &[Option<f64>]| -> Vec<f64> { e.iter().map(|x| x.unwrap_or(0.0)).collect() };
    let (ff, nf) = (flat(&ef), flat(&en));
    let spectrum = (1..=opts.harmonics)
        .map(|k| Harmonic {
            k,
            naive: harmonic_amplitude(&nf, truth.values(), &mask, k),
            fused: harmonic_amplitude(&ff, truth.values(), &mask, k),
        })
        .collect();
    Ok(Comparison {
        fused: stats(fused, &ef, opts),
        naive: stats(naive, &en, opts),
        ripple_region: mask.iter().filter(|&&m| m).count(),
        spectrum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use hdr_fringe::PhaseKind;

    fn map(values: Vec<f64>, w: usize) -> PhaseMap {
        let h = values.len() / w;
        PhaseMap::from_values(w, h, values, PhaseKind::Equivalent).unwrap()
    }

    #[test]
    fn identical_inputs_have_zero_error() {
        let t = map((0..64).map(|i| i as f64 * 0.3).collect(), 8);
        let c = compare_maps(&t, &t, &t, &CompareOptions::default()).unwrap();
        assert_eq!(c.fused.rms, 0.0);
        assert_eq!(c.naive.rms, 0.0);
        assert_eq!(c.ripple_region, 0);
        assert_eq!(c.fused.histogram.total(), 64);
    }

    #[test]
    fn harmonic_amplitude_recovers_a_planted_ripple() {
        let phase: Vec<f64> = (0..4000).map(|i| i as f64 * 0.01).collect();
        let err: Vec<f64> = phase.iter().map(|p| 0.05 * (7.0 * p + 0.4).cos()).collect();
        let mask = vec![true; phase.len()];
        assert!((harmonic_amplitude(&err, &phase, &mask, 7) - 0.05).abs() < 1e-3);
        assert!(harmonic_amplitude(&err, &phase, &mask, 3) < 1e-3);
    }

    #[test]
    fn ripple_only_in_disagreement_region() {
        let truth: Vec<f64> = (0..400).map(|i| i as f64 * 0.05).collect();
        let fused = truth.clone();
        let naive: Vec<f64> = truth
            .iter()
            .enumerate()
            .map(|(i, &p)| if i >= 200 { p + 0.1 * (12.0 * p).sin() } else { p })
            .collect();
        let c = compare_maps(&map(fused, 20), &map(naive, 20), &map(truth, 20), &CompareOptions::default())
            .unwrap();
        assert!(c.ripple_region > 150 && c.ripple_region <= 200);
        let peak = c.naive_peak().unwrap();
        assert_eq!(peak.k, 12);
        assert!(peak.fused == 0.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = map(vec![0.0; 16], 4);
        let b = map(vec![0.0; 16], 8);
        assert!(compare_maps(&a, &b, &a, &CompareOptions::default()).is_err());
    }

    #[test]
    fn histogram_edges() {
        let h = Histogram::new(1.0, 4, [-2.0, -1.0, -0.5, 0.0, 0.99, 1.0]);
        assert_eq!(h.below, 1);
        assert_eq!(h.above, 1);
        assert_eq!(h.bins, vec![1, 1, 1, 1]);
    }
}
