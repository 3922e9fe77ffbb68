//! Bit-exact readers and writers for the on-disk formats.
//!
//! * fringe images: binary PGM (`P5`, maxval 255)
//! * phase maps: grayscale PFM (`Pf`, scale `-1.0`, little-endian, rows
//!   stored bottom-to-top); invalid pixels are NaN
//! * point clouds: ASCII PLY 1.0 with `float` x, y, z vertex properties

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{
    wrap_phase, FringeStack, Image, PhaseKind, PhaseMap, PointCloud, SaturationMap,
};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Splits the next whitespace-delimited header token off `bytes[*pos..]`,
/// skipping `#` comments.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

fn parse_token<T: std::str::FromStr>(
    bytes: &[u8],
    pos: &mut usize,
    format: &'static str,
    path: &Path,
    what: &str,
) -> Result<T> {
    let tok = next_token(bytes, pos)
        .ok_or_else(|| Error::format(format, path, format!("missing {what}")))?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| {
            Error::format(
                format,
                path,
                format!("bad {what} {:?}", String::from_utf8_lossy(tok)),
            )
        })
}

/// Reads an 8-bit binary PGM.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image<u8>> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let mut pos = 0;
    match next_token(&bytes, &mut pos) {
        Some(b"P5") => {}
        _ => return Err(Error::format("PGM", path, "expected P5 magic")),
    }
    let width: usize = parse_token(&bytes, &mut pos, "PGM", path, "width")?;
    let height: usize = parse_token(&bytes, &mut pos, "PGM", path, "height")?;
    let maxval: u32 = parse_token(&bytes, &mut pos, "PGM", path, "maxval")?;
    if maxval != 255 {
        return Err(Error::format(
            "PGM",
            path,
            format!("only 8-bit images (maxval 255) are supported, got maxval {maxval}"),
        ));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width * height;
    if bytes.len() < pos + n {
        return Err(Error::format(
            "PGM",
            path,
            format!(
                "truncated raster: need {n} bytes, have {}",
                bytes.len().saturating_sub(pos)
            ),
        ));
    }
    Image::new(width, height, bytes[pos..pos + n].to_vec())
}

/// Writes an 8-bit binary PGM.
pub fn write_pgm(image: &Image<u8>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let res = (|| {
        write!(w, "P5\n{} {}\n255\n", image.width(), image.height())?;
        w.write_all(image.data())?;
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Loads a fringe stack from PGM files, one per phase shift.
pub fn read_image_stack<P: AsRef<Path>>(
    paths: &[P],
    shifts: &[f64],
    period: f64,
) -> Result<FringeStack<u8>> {
    if paths.len() < 3 {
        return Err(Error::InsufficientSamples { found: paths.len() });
    }
    if paths.len() != shifts.len() {
        return Err(Error::LengthMismatch {
            what: "shift list",
            expected: paths.len(),
            found: shifts.len(),
        });
    }
    let images = paths.iter().map(read_pgm).collect::<Result<Vec<_>>>()?;
    FringeStack::new(images, shifts.to_vec(), period)
}

/// Writes a phase map as a little-endian grayscale PFM. Values are stored at
/// single precision; invalid pixels become NaN.
pub fn write_phase_map(map: &PhaseMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let res = (|| {
        write!(w, "Pf\n{} {}\n-1.0\n", map.width(), map.height())?;
        let mut row_buf = Vec::with_capacity(map.width() * 4);
        for v in (0..map.height()).rev() {
            row_buf.clear();
            for u in 0..map.width() {
                let value = map.get(u, v).map_or(f32::NAN, |p| p as f32);
                row_buf.extend_from_slice(&value.to_le_bytes());
            }
            w.write_all(&row_buf)?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Reads a grayscale PFM written by [`write_phase_map`] (either endianness is
/// accepted). NaN pixels come back invalid. Wrapped maps are re-wrapped so
/// that single-precision rounding just above π stays in (−π, π].
pub fn read_phase_map(path: impl AsRef<Path>, kind: PhaseKind) -> Result<PhaseMap> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let mut pos = 0;
    match next_token(&bytes, &mut pos) {
        Some(b"Pf") => {}
        _ => return Err(Error::format("PFM", path, "expected grayscale Pf magic")),
    }
    let width: usize = parse_token(&bytes, &mut pos, "PFM", path, "width")?;
    let height: usize = parse_token(&bytes, &mut pos, "PFM", path, "height")?;
    let scale: f64 = parse_token(&bytes, &mut pos, "PFM", path, "scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format("PFM", path, "scale must be non-zero"));
    }
    let little = scale < 0.0;
    pos += 1;
    let n = width * height;
    if bytes.len() < pos + 4 * n {
        return Err(Error::format("PFM", path, "truncated raster"));
    }
    let mut values = vec![f64::NAN; n];
    for (i, chunk) in bytes[pos..pos + 4 * n].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let f = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (u, row_from_bottom) = (i % width, i / width);
        let v = height - 1 - row_from_bottom;
        let mut value = f64::from(f);
        if kind == PhaseKind::Wrapped && value.is_finite() {
            value = wrap_phase(value);
        }
        values[v * width + u] = value;
    }
    PhaseMap::from_values(width, height, values, kind)
}

/// Stores saturation counts as an 8-bit PGM (counts never exceed 255 for
/// the supported stack lengths).
pub fn write_saturation_map(map: &SaturationMap, path: impl AsRef<Path>) -> Result<()> {
    let data = map
        .counts()
        .data()
        .iter()
        .map(|&c| u8::try_from(c))
        .collect::<std::result::Result<Vec<u8>, _>>()
        .map_err(|_| Error::InvalidParameter("saturation count above 255".into()))?;
    write_pgm(&Image::new(map.width(), map.height(), data)?, path)
}

pub fn read_saturation_map(path: impl AsRef<Path>, steps: usize) -> Result<SaturationMap> {
    let img = read_pgm(path)?;
    let counts = img.data().iter().map(|&c| u32::from(c)).collect();
    SaturationMap::new(Image::new(img.width(), img.height(), counts)?, steps)
}

/// Writes an ASCII PLY with one `x y z` line per point.
pub fn write_point_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let res = (|| {
        write!(
            w,
            "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
            cloud.len()
        )?;
        for p in cloud.points() {
            writeln!(w, "{} {} {}", p[0] as f32, p[1] as f32, p[2] as f32)?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Reads the vertex positions of an ASCII PLY whose first three vertex
/// properties are x, y, z.
pub fn read_point_cloud(path: impl AsRef<Path>) -> Result<Vec<[f64; 3]>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let mut next_line =
        || -> Result<Option<String>> { lines.next().transpose().map_err(|e| Error::io(path, e)) };
    if next_line()?.as_deref().map(str::trim) != Some("ply") {
        return Err(Error::format("PLY", path, "missing ply magic"));
    }
    let mut count = None;
    loop {
        let line = next_line()?.ok_or_else(|| Error::format("PLY", path, "unterminated header"))?;
        let line = line.trim();
        if line == "end_header" {
            break;
        }
        if let Some(rest) = line.strip_prefix("format ") {
            if !rest.starts_with("ascii") {
                return Err(Error::format("PLY", path, "only ascii PLY is supported"));
            }
        }
        if let Some(rest) = line.strip_prefix("element vertex ") {
            count = Some(
                rest.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::format("PLY", path, "bad vertex count"))?,
            );
        }
    }
    let count = count.ok_or_else(|| Error::format("PLY", path, "no vertex element"))?;
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let line = next_line()?.ok_or_else(|| Error::format("PLY", path, "too few vertices"))?;
        let mut it = line.split_whitespace().map(str::parse::<f32>);
        let mut p = [0.0; 3];
        for c in &mut p {
            *c = match it.next() {
                Some(Ok(x)) => f64::from(x),
                _ => {
                    return Err(Error::format(
                        "PLY",
                        path,
                        format!("bad vertex line {line:?}"),
                    ))
                }
            };
        }
        points.push(p);
    }
    Ok(points)
}

/// Reads a whole text file, tagging IO failures with the path.
pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| Error::io(path, e))?;
    Ok(s)
}

/// Writes a whole text file, tagging IO failures with the path.
pub fn write_text(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
