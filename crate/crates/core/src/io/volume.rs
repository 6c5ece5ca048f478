use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::atomic_write;
use crate::error::{Error, Result};
use crate::image::Image;

/// How raw 16-bit intensities map to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Normalization {
    /// Use the volume's own minimum and maximum.
    MinMax,
    /// Fixed window; values outside are clamped.
    Window { min: f64, max: f64 },
}

/// A stack of equally sized grayscale slices stored as raw 16-bit values.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeDataset {
    pub slices: usize,
    pub width: usize,
    pub height: usize,
    /// Slice-major, then row-major raw intensities.
    pub raw: Vec<u16>,
    /// Raw value mapped to 0 and to 1.
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct VolumeIndex {
    slices: usize,
    width: usize,
    height: usize,
    min: f64,
    max: f64,
    files: Vec<String>,
}

const INDEX_FILE: &str = "volume.toml";

impl VolumeDataset {
    pub fn new(slices: usize, width: usize, height: usize, raw: Vec<u16>, normalization: Normalization) -> Result<Self> {
        if slices == 0 || width == 0 || height == 0 {
            return Err(Error::data("volume dimensions must be positive"));
        }
        if raw.len() != slices * width * height {
            return Err(Error::data(format!("{} values for a {slices}x{height}x{width} volume", raw.len())));
        }
        let (min, max) = match normalization {
            Normalization::MinMax => {
                let lo = *raw.iter().min().expect("non-empty") as f64;
                let hi = *raw.iter().max().expect("non-empty") as f64;
                (lo, hi)
            }
            Normalization::Window { min, max } => {
                if !(min <= max) || !min.is_finite() || !max.is_finite() {
                    return Err(Error::config("normalization window needs min <= max"));
                }
                (min, max)
            }
        };
        Ok(Self { slices, width, height, raw, min, max })
    }

    pub fn voxels(&self) -> usize {
        self.raw.len()
    }

    /// Normalized intensity of a raw value; a degenerate window maps to 0.5.
    pub fn normalize(&self, raw: u16) -> f64 {
        if self.max == self.min {
            return 0.5;
        }
        ((raw as f64 - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        self.min + v * (self.max - self.min)
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.raw.iter().map(|&r| self.normalize(r)).collect()
    }

    pub fn slice_image(&self, s: usize) -> Result<Image> {
        if s >= self.slices {
            return Err(Error::OutOfBounds { row: s, col: 0, rows: self.slices, cols: 1 });
        }
        let n = self.width * self.height;
        Image::from_data(self.width, self.height, 1, self.raw[s * n..(s + 1) * n].iter().map(|&r| self.normalize(r)).collect())
    }

    /// Voxel-center coordinates `(x, y, z)` in `[0, 1]³` and normalized
    /// intensities for the chosen slices.
    pub fn samples(&self, slices: &[usize]) -> Result<(Array2<f64>, Array2<f64>)> {
        validate_subset(slices, self.slices)?;
        let n = self.width * self.height;
        let mut coords = Array2::zeros((slices.len() * n, 3));
        let mut values = Array2::zeros((slices.len() * n, 1));
        let mut row = 0;
        for &s in slices {
            let z = (s as f64 + 0.5) / self.slices as f64;
            for y in 0..self.height {
                for x in 0..self.width {
                    coords[[row, 0]] = (x as f64 + 0.5) / self.width as f64;
                    coords[[row, 1]] = (y as f64 + 0.5) / self.height as f64;
                    coords[[row, 2]] = z;
                    values[[row, 0]] = self.normalize(self.raw[s * n + y * self.width + x]);
                    row += 1;
                }
            }
        }
        Ok((coords, values))
    }

    pub fn all_slices(&self) -> Vec<usize> {
        (0..self.slices).collect()
    }

    /// Writes one 16-bit PGM per slice plus an index file into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let n = self.width * self.height;
        let mut files = Vec::with_capacity(self.slices);
        for s in 0..self.slices {
            let name = format!("slice_{s:04}.pgm");
            let mut bytes = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
            for &v in &self.raw[s * n..(s + 1) * n] {
                bytes.extend_from_slice(&v.to_be_bytes());
            }
            atomic_write(&dir.join(&name), &bytes)?;
            files.push(name);
        }
        let index = VolumeIndex { slices: self.slices, width: self.width, height: self.height, min: self.min, max: self.max, files };
        let text = toml::to_string(&index).map_err(|e| Error::data(e.to_string()))?;
        atomic_write(&dir.join(INDEX_FILE), text.as_bytes())
    }
}

/// Reads a slice stack written by [`VolumeDataset::save`] or by hand.
///
/// With [`Normalization::MinMax`] the window stored in the index is kept when
/// present, so a save/ingest round trip is exact.
pub fn ingest_volume(dir: &Path, normalization: Option<Normalization>) -> Result<VolumeDataset> {
    let index_path = dir.join(INDEX_FILE);
    let text = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let index: VolumeIndex = toml::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", index_path.display())))?;
    if index.files.len() != index.slices {
        return Err(Error::data("index lists a different number of files than slices"));
    }
    let mut raw = Vec::with_capacity(index.slices * index.width * index.height);
    for f in &index.files {
        let path = dir.join(f);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let (w, h, pixels) = decode_pgm16(&bytes).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        if w != index.width || h != index.height {
            return Err(Error::data(format!("{} is {w}x{h}, expected {}x{}", path.display(), index.width, index.height)));
        }
        raw.extend(pixels);
    }
    let norm = normalization.unwrap_or(Normalization::Window { min: index.min, max: index.max });
    VolumeDataset::new(index.slices, index.width, index.height, raw, norm)
}

fn decode_pgm16(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<u16>), String> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            }
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(format!("expected P5, found {}", fields[0]));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| format!("bad header field {s}"));
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 65535 {
        return Err(format!("expected 16-bit maxval 65535, found {maxval}"));
    }
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() != w * h * 2 {
        return Err(format!("expected {} data bytes, found {}", w * h * 2, body.len()));
    }
    Ok((w, h, body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()))
}

/// `count` evenly spaced slice indices out of `slices`, always including the
/// first and last slice when `count > 1`.
pub fn evenly_spaced(slices: usize, count: usize) -> Result<Vec<usize>> {
    if count == 0 || count > slices {
        return Err(Error::config(format!("cannot choose {count} of {slices} slices")));
    }
    if count == 1 {
        return Ok(vec![slices / 2]);
    }
    Ok((0..count).map(|i| ((i * (slices - 1)) as f64 / (count - 1) as f64).round() as usize).collect())
}

pub fn validate_subset(subset: &[usize], slices: usize) -> Result<()> {
    let mut seen = vec![false; slices];
    for &s in subset {
        if s >= slices || std::mem::replace(&mut seen[s], true) {
            return Err(Error::config(format!("slice subset must hold unique indices below {slices}")));
        }
    }
    if subset.is_empty() {
        return Err(Error::config("slice subset is empty"));
    }
    Ok(())
}

/// One ellipsoid of the phantom: center and semi-axes in `[-1, 1]³` units
/// and an additive intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub axes: [f64; 3],
    pub intensity: f64,
}

impl Ellipsoid {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).map(|k| ((p[k] - self.center[k]) / self.axes[k]).powi(2)).sum::<f64>() <= 1.0
    }
}

/// Nested ellipsoids loosely shaped like an abdominal cross-section.
pub fn phantom_ellipsoids() -> Vec<Ellipsoid> {
    let e = |c: [f64; 3], a: [f64; 3], i: f64| Ellipsoid { center: c, axes: a, intensity: i };
    vec![
        e([0.0, 0.0, 0.0], [0.85, 0.7, 1.2], 0.3),
        e([0.0, 0.0, 0.0], [0.78, 0.63, 1.1], 0.2),
        e([-0.35, -0.1, 0.1], [0.25, 0.2, 0.6], 0.25),
        e([0.3, 0.05, -0.2], [0.18, 0.28, 0.5], 0.15),
        e([0.0, 0.4, 0.0], [0.1, 0.1, 0.9], -0.2),
        e([0.05, -0.3, 0.3], [0.12, 0.08, 0.35], 0.1),
    ]
}

/// Analytic phantom intensity in `[0, 1]` at a point of `[-1, 1]³`.
pub fn phantom_value(p: [f64; 3]) -> f64 {
    phantom_ellipsoids().iter().filter(|e| e.contains(p)).map(|e| e.intensity).sum::<f64>().clamp(0.0, 1.0)
}

/// Samples the phantom at voxel centers into 16-bit values with a fixed
/// `[0, 65535]` window.
pub fn phantom(slices: usize, width: usize, height: usize) -> Result<VolumeDataset> {
    let shapes = phantom_ellipsoids();
    let mut raw = Vec::with_capacity(slices * width * height);
    for s in 0..slices {
        let z = 2.0 * (s as f64 + 0.5) / slices as f64 - 1.0;
        for y in 0..height {
            let py = 2.0 * (y as f64 + 0.5) / height as f64 - 1.0;
            for x in 0..width {
                let px = 2.0 * (x as f64 + 0.5) / width as f64 - 1.0;
                let v: f64 = shapes.iter().filter(|e| e.contains([px, py, z])).map(|e| e.intensity).sum();
                raw.push((v.clamp(0.0, 1.0) * 65535.0).round() as u16);
            }
        }
    }
    VolumeDataset::new(slices, width, height, raw, Normalization::Window { min: 0.0, max: 65535.0 })
}
