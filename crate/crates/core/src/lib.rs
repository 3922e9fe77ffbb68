//! Saturation-tolerant multi-frequency phase-shifting profilometry.
//!
//! The crate covers the full measurement chain of a fringe-projection
//! stereo system:
//!
//! - [`phase`]: least-squares wrapped-phase retrieval for arbitrary shift
//!   schedules, with the closed form for uniform ones;
//! - [`hdr`]: saturation maps, saturation-tolerant retrieval, temporal
//!   unwrapping and multi-frequency fusion;
//! - [`stereo`]: sub-pixel phase matching along rectified rows and affine
//!   triangulation;
//! - [`sim`]: a deterministic dual-view fringe simulator with ground truth;
//! - [`io`]: PGM, PFM and PLY readers and writers.
//!
//! ```
//! use hdr_fringe::phase::{solve_standard, ShiftSchedule};
//!
//! let schedule = ShiftSchedule::uniform(4).unwrap();
//! let phi: f64 = 0.7;
//! let samples: Vec<f64> = schedule
//!     .deltas()
//!     .iter()
//!     .map(|d| 100.0 * (1.0 + 0.5 * (phi + d).cos()))
//!     .collect();
//! let got = solve_standard(&samples, &schedule).unwrap();
//! assert!((got - phi).abs() < 1e-12);
//! ```

pub mod error;
pub mod hdr;
pub mod image;
pub mod io;
pub mod phase;
pub mod sim;
pub mod stereo;

pub use error::{Error, Result};
pub use hdr::{
    densest_only, fuse_levels, gen_phase_shifting, multi_freq_hdr, naive_phase_shifting, sat_map,
    temporal_unwrap, FusedPhase, FusionReport, HdrConfig, MultiFreqSet,
};
pub use image::{
    wrap_phase, FringeStack, Image, IndexMap, Intensity, PhaseKind, PhaseMap, PointCloud,
    SaturationMap,
};
pub use phase::{
    build_coefficients, predict_phase_variance, solve_generalized, solve_standard,
    CoefficientMatrix, NoiseModel, ShiftSchedule,
};
pub use stereo::{
    match_pair, match_row, triangulate, AffineCamera, Match, MatchList, RectifiedPair,
    Triangulation, TriangulationConfig, Triangulator,
};

// The guide's code blocks run as doc-tests, one module per chapter so a
// failure points at its chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/phase-retrieval.md")]
    mod phase_retrieval {}
    #[doc = include_str!("../../../book/src/saturation.md")]
    mod saturation {}
    #[doc = include_str!("../../../book/src/fusion.md")]
    mod fusion {}
    #[doc = include_str!("../../../book/src/stereo.md")]
    mod stereo {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
}
