//! Height-field scenes: a regular grid of heights and reflectance gains.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_text, write_text};

/// A height field `z(x, y)` in millimetres and a reflectance gain `r(x, y)`,
/// sampled on a regular grid centred on the origin and interpolated
/// bilinearly in between.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    nx: usize,
    ny: usize,
    extent: [f64; 2],
    heights: Vec<f64>,
    reflectance: Vec<f64>,
}

pub const MIN_GRID: usize = 16;

/// Names accepted by [`Scene::builtin`].
pub const BUILTIN_SCENES: [&str; 3] = ["plane", "gaussian-bump", "shiny-disk-on-ramp"];

impl Scene {
    pub fn new(
        nx: usize,
        ny: usize,
        extent: [f64; 2],
        heights: Vec<f64>,
        reflectance: Vec<f64>,
    ) -> Result<Self> {
        if nx < MIN_GRID || ny < MIN_GRID {
            return Err(Error::InvalidParameter(format!(
                "scene grid must be at least {MIN_GRID}x{MIN_GRID}, got {nx}x{ny}"
            )));
        }
        if !extent.iter().all(|e| e.is_finite() && *e > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bad scene extent {extent:?}"
            )));
        }
        for (what, buf) in [("heights", &heights), ("reflectance", &reflectance)] {
            if buf.len() != nx * ny {
                return Err(Error::LengthMismatch {
                    what: "scene raster",
                    expected: nx * ny,
                    found: buf.len(),
                });
            }
            if buf.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("non-finite scene {what}")));
            }
        }
        if reflectance.iter().any(|&r| r < 0.0) {
            return Err(Error::InvalidParameter("negative reflectance".into()));
        }
        Ok(Self {
            nx,
            ny,
            extent,
            heights,
            reflectance,
        })
    }

    /// Samples analytic fields on an `n`×`n` grid over a square extent.
    pub fn from_fn(
        n: usize,
        extent: f64,
        height: impl Fn(f64, f64) -> f64,
        reflectance: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut h = Vec::with_capacity(n * n);
        let mut r = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let x = -extent / 2.0 + extent * i as f64 / (n - 1) as f64;
                let y = -extent / 2.0 + extent * j as f64 / (n - 1) as f64;
                h.push(height(x, y));
                r.push(reflectance(x, y));
            }
        }
        Self::new(n, n, [extent, extent], h, r)
    }

    /// One of [`BUILTIN_SCENES`] with default parameters on a 4×4 mm extent.
    pub fn builtin(name: &str) -> Result<Self> {
        Self::builtin_with(name, &BuiltinParams::default())
    }

    pub fn builtin_with(name: &str, p: &BuiltinParams) -> Result<Self> {
        let (n, e) = (p.grid, p.extent);
        match name {
            "plane" => Self::from_fn(n, e, |_, _| 0.0, |_, _| 1.0),
            "gaussian-bump" => {
                let (a, w) = (p.bump_height, p.bump_width);
                Self::from_fn(
                    n,
                    e,
                    |x, y| a * (-(x * x + y * y) / (2.0 * w * w)).exp(),
                    |_, _| 1.0,
                )
            }
            "shiny-disk-on-ramp" => {
                let (slope, rad, gain) = (p.ramp_slope, p.disk_radius, p.disk_gain);
                Self::from_fn(
                    n,
                    e,
                    |x, _| slope * x,
                    |x, y| {
                        if x * x + y * y <= rad * rad {
                            gain
                        } else {
                            1.0
                        }
                    },
                )
            }
            other => Err(Error::InvalidParameter(format!(
                "unknown scene {other:?}; expected one of {BUILTIN_SCENES:?}"
            ))),
        }
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn extent(&self) -> [f64; 2] {
        self.extent
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn reflectances(&self) -> &[f64] {
        &self.reflectance
    }

    pub fn height_range(&self) -> (f64, f64) {
        self.heights
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &z| {
                (lo.min(z), hi.max(z))
            })
    }

    /// True when `(x, y)` lies inside the sampled extent.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x.abs() <= self.extent[0] / 2.0 && y.abs() <= self.extent[1] / 2.0
    }

    /// Grid coordinates of `(x, y)`, clamped to the grid.
    fn cell(&self, x: f64, y: f64) -> (usize, usize, f64, f64) {
        let gx = ((x + self.extent[0] / 2.0) / self.extent[0] * (self.nx - 1) as f64)
            .clamp(0.0, (self.nx - 1) as f64);
        let gy = ((y + self.extent[1] / 2.0) / self.extent[1] * (self.ny - 1) as f64)
            .clamp(0.0, (self.ny - 1) as f64);
        let i = (gx.floor() as usize).min(self.nx - 2);
        let j = (gy.floor() as usize).min(self.ny - 2);
        (i, j, gx - i as f64, gy - j as f64)
    }

    fn bilinear(&self, buf: &[f64], x: f64, y: f64) -> f64 {
        let (i, j, fx, fy) = self.cell(x, y);
        let at = |ii: usize, jj: usize| buf[jj * self.nx + ii];
        let top = at(i, j) * (1.0 - fx) + at(i + 1, j) * fx;
        let bot = at(i, j + 1) * (1.0 - fx) + at(i + 1, j + 1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        self.bilinear(&self.heights, x, y)
    }

    pub fn reflectance(&self, x: f64, y: f64) -> f64 {
        self.bilinear(&self.reflectance, x, y)
    }

    /// Grid spacing along x and y, in millimetres.
    pub fn spacing(&self) -> [f64; 2] {
        [
            self.extent[0] / (self.nx - 1) as f64,
            self.extent[1] / (self.ny - 1) as f64,
        ]
    }

    /// Text form: `grid NX NY`, `extent EX EY`, then the keyword `heights`
    /// followed by NY rows of NX decimals and `reflectance` with the same
    /// layout. `#` starts a comment line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "grid {} {}", self.nx, self.ny);
        let _ = writeln!(s, "extent {:?} {:?}", self.extent[0], self.extent[1]);
        for (name, buf) in [
            ("heights", &self.heights),
            ("reflectance", &self.reflectance),
        ] {
            let _ = writeln!(s, "{name}");
            for row in buf.chunks(self.nx) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(s, "{}", line.join(" "));
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |why: String| Error::InvalidParameter(format!("scene file: {why}"));
        let mut tokens = text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .flat_map(str::split_whitespace);
        let keyword = |kw: &str, tok: Option<&str>| match tok {
            Some(t) if t == kw => Ok(()),
            other => Err(bad(format!("expected {kw:?}, found {other:?}"))),
        };
        let num = |what: &str, tok: Option<&str>| -> Result<f64> {
            tok.and_then(|t| t.parse::<f64>().ok())
                .ok_or_else(|| bad(format!("bad or missing {what}: {tok:?}")))
        };
        keyword("grid", tokens.next())?;
        let nx = num("grid width", tokens.next())?;
        let ny = num("grid height", tokens.next())?;
        if nx.fract() != 0.0 || ny.fract() != 0.0 || nx < 0.0 || ny < 0.0 {
            return Err(bad(format!("grid size {nx} {ny} is not integral")));
        }
        let (nx, ny) = (nx as usize, ny as usize);
        keyword("extent", tokens.next())?;
        let ex = num("extent x", tokens.next())?;
        let ey = num("extent y", tokens.next())?;
        let mut blocks = Vec::with_capacity(2);
        for name in ["heights", "reflectance"] {
            keyword(name, tokens.next())?;
            let block = (0..nx * ny)
                .map(|_| num(name, tokens.next()))
                .collect::<Result<Vec<f64>>>()?;
            blocks.push(block);
        }
        let trailing = tokens.count();
        if trailing > 0 {
            return Err(bad(format!("{trailing} trailing tokens")));
        }
        let reflectance = blocks.pop().unwrap();
        let heights = blocks.pop().unwrap();
        Self::new(nx, ny, [ex, ey], heights, reflectance)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&read_text(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path, &self.to_text())
    }
}

/// Shape parameters of the built-in scenes.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BuiltinParams {
    /// Grid nodes per side.
    pub grid: usize,
    /// Side length of the square extent, mm.
    pub extent: f64,
    /// Peak height of the bump, mm.
    pub bump_height: f64,
    /// Standard deviation of the bump, mm.
    pub bump_width: f64,
    /// dz/dx of the ramp.
    pub ramp_slope: f64,
    /// Radius of the shiny disk, mm.
    pub disk_radius: f64,
    /// Reflectance gain inside the disk.
    pub disk_gain: f64,
}

impl Default for BuiltinParams {
    fn default() -> Self {
        Self {
            grid: 401,
            extent: 4.0,
            bump_height: 0.3,
            bump_width: 0.6,
            ramp_slope: 0.1,
            disk_radius: 0.6,
            disk_gain: 3.0,
        }
    }
}
