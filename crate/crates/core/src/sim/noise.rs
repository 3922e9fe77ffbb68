//! Counter-based deterministic noise.
//!
//! Every draw is a pure function of its key, so rendering order and thread
//! count cannot change a single output bit.

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of counters into one key.
#[inline]
pub fn mix_key(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(seed), |acc, &p| {
        splitmix64(acc ^ p.wrapping_mul(0xD1B5_4A32_D192_ED03))
    })
}

/// Uniform in (0, 1], 53 bits.
#[inline]
pub fn unit_open_closed(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw for `key` (Box–Muller on two derived uniforms).
#[inline]
pub fn standard_normal(key: u64) -> f64 {
    let u1 = unit_open_closed(splitmix64(key));
    let u2 = unit_open_closed(splitmix64(key ^ 0x6A09_E667_F3BC_C909));
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Gaussian noise source keyed by `(seed, counters...)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaussianField {
    pub seed: u64,
}

impl GaussianField {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    #[inline]
    pub fn sample(&self, parts: &[u64]) -> f64 {
        standard_normal(mix_key(self.seed, parts))
    }

    /// Uniform in (0, 1] on an independent stream.
    #[inline]
    pub fn uniform(&self, parts: &[u64]) -> f64 {
        unit_open_closed(splitmix64(mix_key(
            self.seed ^ 0xA5A5_5A5A_0F0F_F0F0,
            parts,
        )))
    }
}
