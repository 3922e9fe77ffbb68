//! Phase-based correspondence on rectified rows and affine triangulation.
//!
//! After rectification a scene point appears on the same row in both views
//! and, with vertical fringes, the absolute phase grows monotonically along
//! each row. A left pixel is matched to the right pixel with the nearest
//! phase, then refined to sub-pixel precision by inverse linear interpolation
//! against the neighbour on the far side of the target phase.

use std::path::Path;

use nalgebra::{Matrix2x4, Matrix4x3, Vector2, Vector3, Vector4};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{PhaseMap, PointCloud};
use crate::io::{read_text, write_text};

/// Default rejection threshold on the phase gap of the nearest candidate:
/// one densest-fringe period.
pub const DEFAULT_MAX_PHASE_GAP: f64 = 2.0 * std::f64::consts::PI;

/// Default reprojection bound for accepting a triangulated point, in pixels.
pub const DEFAULT_MAX_RESIDUAL: f64 = 0.5;

/// Left and right absolute phase maps on the same scale, rectified so that
/// corresponding points share a row.
#[derive(Debug, Clone, Copy)]
pub struct RectifiedPair<'a> {
    left: &'a PhaseMap,
    right: &'a PhaseMap,
}

impl<'a> RectifiedPair<'a> {
    pub fn new(left: &'a PhaseMap, right: &'a PhaseMap) -> Result<Self> {
        if !left.same_shape(right) {
            return Err(Error::DimensionMismatch {
                expected_width: left.width(),
                expected_height: left.height(),
                width: right.width(),
                height: right.height(),
            });
        }
        Ok(Self { left, right })
    }

    pub fn left(&self) -> &PhaseMap {
        self.left
    }

    pub fn right(&self) -> &PhaseMap {
        self.right
    }
}

/// A left pixel and its sub-pixel column in the right view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub u_left: usize,
    pub v: usize,
    pub u_right: f64,
}

/// Correspondences for a whole pair, at most one per left pixel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchList {
    pub width: usize,
    pub height: usize,
    pub matches: Vec<Match>,
}

impl MatchList {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    /// Text form: a `width height count` header then one `u_left v u_right`
    /// line per match. `u_right` uses the shortest exact decimal form, so the
    /// round trip is lossless.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.width, self.height, self.matches.len());
        for m in &self.matches {
            s.push_str(&format!("{} {} {:?}\n", m.u_left, m.v, m.u_right));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |why: String| Error::InvalidParameter(format!("match list: {why}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty".into()))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(format!("bad header {header:?}")))?;
        let [width, height, count] = head[..] else {
            return Err(bad(format!("bad header {header:?}")));
        };
        let mut matches = Vec::with_capacity(count);
        for line in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            let parsed = match f[..] {
                [a, b, c] => a
                    .parse()
                    .ok()
                    .zip(b.parse().ok())
                    .zip(c.parse::<f64>().ok()),
                _ => None,
            };
            let ((u_left, v), u_right) = parsed.ok_or_else(|| bad(format!("bad line {line:?}")))?;
            if u_left >= width || v >= height || !(0.0..=(width - 1) as f64).contains(&u_right) {
                return Err(bad(format!("match out of bounds {line:?}")));
            }
            matches.push(Match { u_left, v, u_right });
        }
        if matches.len() != count {
            return Err(bad(format!(
                "expected {count} matches, found {}",
                matches.len()
            )));
        }
        Ok(Self {
            width,
            height,
            matches,
        })
    }
}

/// Half-open column ranges of a right row over which the phase is valid and
/// strictly increasing. Both pixels of any non-increasing step are dropped.
fn monotone_segments(values: &[f64], valid: &[bool]) -> Vec<(usize, usize)> {
    let w = values.len();
    let mut usable = valid.to_vec();
    for u in 0..w.saturating_sub(1) {
        if valid[u] && valid[u + 1] && values[u + 1] <= values[u] {
            usable[u] = false;
            usable[u + 1] = false;
        }
    }
    let mut segments = Vec::new();
    let mut u = 0;
    while u < w {
        if !usable[u] {
            u += 1;
            continue;
        }
        let start = u;
        while u < w && usable[u] {
            u += 1;
        }
        segments.push((start, u));
    }
    segments
}

/// Nearest-phase column within one monotone segment; ties go to the left.
fn nearest_in(values: &[f64], (a, b): (usize, usize), target: f64) -> (usize, f64) {
    let seg = &values[a..b];
    let i = seg.partition_point(|&p| p < target);
    let mut best = (usize::MAX, f64::INFINITY);
    for j in [i.wrapping_sub(1), i] {
        if j < seg.len() {
            let gap = (seg[j] - target).abs();
            if gap < best.1 {
                best = (a + j, gap);
            }
        }
    }
    best
}

/// Matches every valid left pixel of `row`. Returns `(u_left, u_right)`.
pub fn match_row(pair: &RectifiedPair<'_>, row: usize, max_phase_gap: f64) -> Vec<(usize, f64)> {
    let lv = pair.left.row_values(row);
    let lok = pair.left.row_valid(row);
    let rv = pair.right.row_values(row);
    let segments = monotone_segments(rv, pair.right.row_valid(row));
    let mut out = Vec::new();
    if segments.is_empty() {
        return out;
    }
    for (u_left, (&target, &ok)) in lv.iter().zip(lok).enumerate() {
        if !ok {
            continue;
        }
        let mut best = (usize::MAX, f64::INFINITY, 0usize);
        for (s, &seg) in segments.iter().enumerate() {
            let (u, gap) = nearest_in(rv, seg, target);
            // strict comparison keeps the smaller column on ties
            if gap < best.1 {
                best = (u, gap, s);
            }
        }
        let (ui, gap, s) = best;
        if !(gap <= max_phase_gap) {
            continue;
        }
        let (a, b) = segments[s];
        let at = rv[ui];
        let u_right = if target > at {
            if ui + 1 >= b {
                continue;
            }
            ui as f64 + (target - at) / (rv[ui + 1] - at)
        } else {
            if ui == a {
                continue;
            }
            ui as f64 + (target - at) / (at - rv[ui - 1])
        };
        out.push((u_left, u_right));
    }
    out
}

/// Matches all rows of a pair (rows in parallel; output in row-major order).
pub fn match_pair(pair: &RectifiedPair<'_>, max_phase_gap: f64) -> MatchList {
    let rows: Vec<Vec<Match>> = (0..pair.left.height())
        .into_par_iter()
        .map(|v| {
            match_row(pair, v, max_phase_gap)
                .into_iter()
                .map(|(u_left, u_right)| Match { u_left, v, u_right })
                .collect()
        })
        .collect();
    MatchList {
        width: pair.left.width(),
        height: pair.left.height(),
        matches: rows.into_iter().flatten().collect(),
    }
}

/// An affine camera: pixel `(u, v) = P · (x, y, z, 1)` with world units in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineCamera {
    projection: Matrix2x4<f64>,
}

impl AffineCamera {
    pub fn new(rows: [[f64; 4]; 2]) -> Result<Self> {
        let projection = Matrix2x4::from_row_slice(&[rows[0], rows[1]].concat());
        if projection.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite camera entry".into()));
        }
        let block = projection.fixed_view::<2, 3>(0, 0).into_owned();
        let sv = block.singular_values();
        if !(sv.min() > 1e-12 * sv.max().max(f64::MIN_POSITIVE)) {
            return Err(Error::InvalidParameter(
                "camera projection block must have rank 2".into(),
            ));
        }
        Ok(Self { projection })
    }

    pub fn rows(&self) -> [[f64; 4]; 2] {
        let p = &self.projection;
        [
            [p[(0, 0)], p[(0, 1)], p[(0, 2)], p[(0, 3)]],
            [p[(1, 0)], p[(1, 1)], p[(1, 2)], p[(1, 3)]],
        ]
    }

    pub fn project(&self, point: [f64; 3]) -> [f64; 2] {
        let x = Vector4::new(point[0], point[1], point[2], 1.0);
        let uv = self.projection * x;
        [uv[0], uv[1]]
    }
}

/// Writes the camera file: left then right, two rows of four decimals each.
pub fn write_cameras(
    path: impl AsRef<Path>,
    left: &AffineCamera,
    right: &AffineCamera,
) -> Result<()> {
    let mut s = String::new();
    for cam in [left, right] {
        for row in cam.rows() {
            let line: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
    }
    write_text(path, &s)
}

/// Reads a camera file written by [`write_cameras`]. Blank lines and lines
/// starting with `#` are ignored.
pub fn read_cameras(path: impl AsRef<Path>) -> Result<(AffineCamera, AffineCamera)> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format("camera", path, format!("bad number in {line:?}")))?;
        let row: [f64; 4] = vals.try_into().map_err(|_| {
            Error::format("camera", path, format!("expected 4 columns in {line:?}"))
        })?;
        rows.push(row);
    }
    if rows.len() != 4 {
        return Err(Error::format(
            "camera",
            path,
            format!("expected 4 rows (2 per camera), found {}", rows.len()),
        ));
    }
    Ok((
        AffineCamera::new([rows[0], rows[1]])?,
        AffineCamera::new([rows[2], rows[3]])?,
    ))
}

/// Triangulation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangulationConfig {
    /// Largest accepted reprojection error in either view, in pixels.
    pub max_residual: f64,
}

impl Default for TriangulationConfig {
    fn default() -> Self {
        Self {
            max_residual: DEFAULT_MAX_RESIDUAL,
        }
    }
}

/// Triangulated cloud plus rejection tallies.
#[derive(Debug, Clone)]
pub struct Triangulation {
    pub cloud: PointCloud,
    pub rejected_rank: usize,
    pub rejected_residual: usize,
}

/// Linear least-squares triangulation of a pair of affine views.
///
/// The four equations from `(u_L, v)` in the left camera and `(u_R, v)` in
/// the right camera share one 4×3 system matrix for every match, so its
/// pseudo-inverse is computed once.
#[derive(Debug, Clone)]
pub struct Triangulator {
    left: AffineCamera,
    right: AffineCamera,
    pinv: Option<nalgebra::Matrix3x4<f64>>,
    offset: Vector4<f64>,
}

impl Triangulator {
    pub fn new(left: AffineCamera, right: AffineCamera) -> Self {
        let (l, r) = (&left.projection, &right.projection);
        let a = Matrix4x3::from_fn(|i, j| if i < 2 { l[(i, j)] } else { r[(i - 2, j)] });
        let offset = Vector4::new(l[(0, 3)], l[(1, 3)], r[(0, 3)], r[(1, 3)]);
        let svd = a.svd(true, true);
        let sv = svd.singular_values;
        let full_rank = sv.min() > 1e-12 * sv.max();
        let pinv = full_rank.then(|| svd.pseudo_inverse(0.0).expect("svd computed with u and v"));
        Self {
            left,
            right,
            pinv,
            offset,
        }
    }

    pub fn is_full_rank(&self) -> bool {
        self.pinv.is_some()
    }

    /// Least-squares point for left pixel `(u_left, v)` and right column
    /// `u_right` on the same row, or `None` for a rank-deficient system.
    pub fn solve(&self, u_left: f64, v: f64, u_right: f64) -> Option<[f64; 3]> {
        let pinv = self.pinv.as_ref()?;
        let obs = Vector4::new(u_left, v, u_right, v) - self.offset;
        let x: Vector3<f64> = pinv * obs;
        Some([x[0], x[1], x[2]])
    }

    /// Larger of the two reprojection distances, in pixels.
    pub fn residual(&self, point: [f64; 3], u_left: f64, v: f64, u_right: f64) -> f64 {
        let pl = self.left.project(point);
        let pr = self.right.project(point);
        let dl = Vector2::new(pl[0] - u_left, pl[1] - v).norm();
        let dr = Vector2::new(pr[0] - u_right, pr[1] - v).norm();
        dl.max(dr)
    }
}

/// Triangulates every match; points whose reprojection error exceeds the
/// bound, or that come from a rank-deficient system, are dropped and counted.
pub fn triangulate(
    matches: &MatchList,
    left: &AffineCamera,
    right: &AffineCamera,
    config: &TriangulationConfig,
) -> Result<Triangulation> {
    let tri = Triangulator::new(*left, *right);
    let mut cloud = PointCloud::new(matches.width, matches.height);
    let mut rejected_rank = 0;
    let mut rejected_residual = 0;
    for m in &matches.matches {
        let v = m.v as f64;
        let u_left = m.u_left as f64;
        let Some(p) = tri.solve(u_left, v, m.u_right) else {
            rejected_rank += 1;
            continue;
        };
        if !(tri.residual(p, u_left, v, m.u_right) <= config.max_residual) {
            rejected_residual += 1;
            continue;
        }
        cloud.push(p, (m.u_left, m.v))?;
    }
    Ok(Triangulation {
        cloud,
        rejected_rank,
        rejected_residual,
    })
}
